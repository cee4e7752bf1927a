"""Run diagnostics: diameters, the sufficient flocking condition, the
decay certificate, the dissipation functional, and residual checks for
the diameter differential inequalities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .kernels import INFINITE, halanay_rate
from .particle import HistoryBuffer, ModelSpec, ParticleState, TrajectoryRecord, \
    pairwise_diameter

_D_STAR_CAP = 1e6


class PreconditionError(ValueError):
    """A diagnostic was invoked outside its stated hypotheses."""


def diameters(state: ParticleState):
    """Exact spatial and velocity diameters (max pairwise distances)."""
    return pairwise_diameter(state.x), pairwise_diameter(state.v)


def max_speed(history: HistoryBuffer) -> float:
    """Largest agent speed over the stored history nodes."""
    _, _, V = history.snapshots()
    return float(np.linalg.norm(V, axis=2).max())


def beta_n(n: int) -> float:
    """Crowding factor (n - 2) / (n - 1); zero below three agents."""
    if n < 2:
        return 0.0
    return (n - 2) / (n - 1)


@dataclass
class FlockingReport:
    lhs: float
    rhs: float                      # may be INFINITE
    beta_n: float
    holds: bool
    gamma_predicted: Optional[float]
    gamma_fitted: Optional[float] = None
    gamma_predicted_n_independent: Optional[float] = None
    d_star: Optional[float] = None
    r_v: Optional[float] = None

    def to_json_dict(self):
        rhs = "inf" if math.isinf(self.rhs) else self.rhs
        return {
            "lhs": self.lhs,
            "rhs": rhs,
            "beta_N": self.beta_n,
            "holds": self.holds,
            "gamma_predicted": self.gamma_predicted,
            "gamma_fitted": self.gamma_fitted,
            "gamma_predicted_n_independent": self.gamma_predicted_n_independent,
            "d_star": self.d_star,
            "r_v": self.r_v,
        }


# ---------------------------------------------------------------------------
# quadrature helpers on sampled grids


def _alpha_weighted(kernel, upper, f, s_nodes):
    """Trapezoid of alpha(s) * f(s) over [0, upper] on the given s-grid,
    with a partial top cell when upper is off-grid.  A point-mass kernel
    evaluates f at its offset."""
    if kernel.is_dirac:
        return float(np.asarray(f(np.array([kernel.tau_bar])))[0])
    s_nodes = np.asarray(s_nodes, dtype=float)
    stepscale = s_nodes[1] - s_nodes[0] if len(s_nodes) > 1 else upper
    s = s_nodes[s_nodes < upper - 1e-9 * stepscale]
    s = np.append(s, upper)
    if s[0] > 0.0:
        s = np.insert(s, 0, 0.0)
    vals = np.asarray(kernel.alpha(s)) * np.asarray(f(s))
    return float(np.trapezoid(vals, s))


def _cumulative(times, values):
    """Running trapezoid integral of sampled values, anchored at times[0]."""
    out = np.zeros_like(values)
    out[1:] = np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(times))
    return out


def condition_sides(z, d_x, d_v, r_v, model: ModelSpec, beta: float):
    """Left and right sides of the sufficient flocking condition, from
    diameter samples on the initial window (z increasing, z[-1] = 0)."""
    kernel, tau, psi = model.alpha, model.tau, model.psi
    tau0, tau_star = tau.tau0, tau.tau_star
    h0 = kernel.mass(tau.value(0.0))
    cum = _cumulative(z, d_v)

    def trailing_dv(s):
        # integral of d_v over [-s, 0]
        return cum[-1] - np.interp(-np.asarray(s), z, cum)

    s_nodes = -z[::-1]
    lhs = h0 * d_v[-1] + _alpha_weighted(kernel, tau0, trailing_dv, s_nodes)
    if not psi.integrable:
        return lhs, INFINITE

    def tail_at(s):
        return psi.tail(np.interp(-np.asarray(s), z, d_x) + r_v * tau0)

    rhs = beta * _alpha_weighted(kernel, tau_star, tail_at, s_nodes)
    return lhs, rhs


def locate_d_star(z, d_x, d_v, r_v, model: ModelSpec, beta: float, lhs: float):
    """Smallest radius d at which the budgeted influence integral matches
    the left side; found by bisection on [max lower bound, 1e6]."""
    kernel, tau, psi = model.alpha, model.tau, model.psi
    tau0, tau_star = tau.tau0, tau.tau_star
    s_nodes = -z[::-1]

    def lower_bound(s):
        return np.interp(-np.asarray(s), z, d_x) + r_v * tau0

    def budget(d):
        def f(s):
            return psi.integral(lower_bound(s), d)
        return beta * _alpha_weighted(kernel, tau_star, f, s_nodes)

    if kernel.is_dirac:
        lo = float(lower_bound(kernel.tau_bar))
    else:
        lo = float(np.max(lower_bound(np.minimum(s_nodes, tau_star))))
    if budget(lo) >= lhs:
        return lo
    hi = _D_STAR_CAP
    if budget(hi) < lhs:
        return None
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if budget(mid) >= lhs:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-9 * max(1.0, hi):
            break
    return hi


def predicted_rate(d_star, r_v, model: ModelSpec, beta: float) -> float:
    """Certified exponential decay rate from the located radius."""
    psi_star = model.psi(d_star + 4.0 * r_v * model.tau.tau0)
    a = 1.0 - beta * psi_star
    a = min(max(a, 1e-12), 1.0 - 1e-15)
    return halanay_rate(a, model.tau.tau0)


def _history_series(history: HistoryBuffer):
    z, X, V = history.snapshots()
    d_x = np.array([pairwise_diameter(X[k]) for k in range(len(z))])
    d_v = np.array([pairwise_diameter(V[k]) for k in range(len(z))])
    return z, d_x, d_v


def flocking_condition(history: HistoryBuffer, model: ModelSpec) -> FlockingReport:
    """Evaluate the sufficient flocking condition on the initial window.

    Requires more than two agents (with two, the normalized weights make
    alignment unconditional and the condition is not informative).
    When the condition holds, the report carries the certified decay rate,
    both with the crowding factor of the actual n and with the n-uniform
    factor 1/2.
    """
    n = model.n
    if n <= 2:
        raise PreconditionError(
            f"flocking condition requires more than two agents (got n={n})")
    z, d_x, d_v = _history_series(history)
    r_v = max_speed(history)
    beta = beta_n(n)
    lhs, rhs = condition_sides(z, d_x, d_v, r_v, model, beta)
    holds = lhs < rhs

    gamma = gamma_half = d_star = None
    if holds:
        d_star = locate_d_star(z, d_x, d_v, r_v, model, beta, lhs)
        if d_star is not None:
            gamma = predicted_rate(d_star, r_v, model, beta)
        d_star_half = locate_d_star(z, d_x, d_v, r_v, model, 0.5, lhs)
        if d_star_half is not None:
            gamma_half = predicted_rate(d_star_half, r_v, model, 0.5)
    return FlockingReport(lhs=lhs, rhs=rhs, beta_n=beta, holds=holds,
                          gamma_predicted=gamma,
                          gamma_predicted_n_independent=gamma_half,
                          d_star=d_star, r_v=r_v)


# ---------------------------------------------------------------------------
# dissipation functional


def lyapunov(t: float, trajectory: TrajectoryRecord, model: ModelSpec) -> float:
    """Dissipation functional at time t >= 0 from the recorded series.

    Combines the current weighted velocity diameter, the kernel-weighted
    influence budget spent by spatial spreading since start, and the
    trailing velocity-diameter integral; nonincreasing along runs where
    the flocking condition holds.
    """
    times, d_x, d_v = trajectory.times, trajectory.d_x, trajectory.d_v
    if t < 0.0 or t > times[-1] + 1e-9:
        raise PreconditionError(f"time {t} outside the recorded range")
    if times[0] > t - model.tau.tau0 + 1e-9:
        raise PreconditionError("recorded history does not cover the delay window")
    kernel, tau, psi = model.alpha, model.tau, model.psi
    tau0 = tau.tau0
    tau_t = tau.value(t)
    hist = times <= 1e-12
    r_v = float(trajectory.v_max[hist].max())
    beta = beta_n(model.n)

    h_t = kernel.mass(tau_t)
    dv_t = float(np.interp(t, times, d_v))
    term1 = h_t * dv_t

    inside = (times > t - tau_t) & (times < t)
    s_nodes = np.concatenate([[0.0], np.sort(t - times[inside])])

    def spread_budget(s):
        a = np.interp(-np.asarray(s), times, d_x) + r_v * tau0
        b = np.interp(t - np.asarray(s), times, d_x) + r_v * tau0
        return np.abs(psi.integral(a, b))

    term2 = beta * _alpha_weighted(kernel, tau_t, spread_budget, s_nodes)

    cum = _cumulative(times, d_v)

    def trailing_dv(s):
        return np.interp(t, times, cum) - np.interp(t - np.asarray(s), times, cum)

    term3 = _alpha_weighted(kernel, tau_t, trailing_dv, s_nodes)
    return term1 + term2 + term3


# ---------------------------------------------------------------------------
# differential-inequality residuals


class DiniResiduals(NamedTuple):
    d_x: float
    d_v: float


def verify_dini_inequalities(trajectory: TrajectoryRecord, model: ModelSpec,
                             subsample: int = 1) -> DiniResiduals:
    """Worst positive violation of the two diameter inequalities, using
    forward differences at the recording stride.

    Both residuals vanish to first order in the stride for smooth runs;
    they are clamped at zero when the inequalities hold with margin.
    """
    times, d_x, d_v = trajectory.times, trajectory.d_x, trajectory.d_v
    sel = np.arange(trajectory.i0, len(times), subsample)
    if len(sel) < 3:
        raise PreconditionError("need at least three recorded samples past t=0")
    ts = times[sel]
    dx = d_x[sel]
    dv = d_v[sel]
    hist = times <= 1e-12
    r_v = float(trajectory.v_max[hist].max())
    beta = beta_n(model.n)
    kernel, tau, psi = model.alpha, model.tau, model.psi
    tau0 = tau.tau0

    deltas = np.diff(ts)
    res_x = float(np.max(np.abs(np.diff(dx)) / deltas - dv[:-1]))

    def bracket(t_k, dv_k):
        tau_t = tau.value(t_k)

        def f(s):
            dxs = np.interp(t_k - np.asarray(s), times, d_x)
            dvs = np.interp(t_k - np.asarray(s), times, d_v)
            return (1.0 - beta * psi(dxs + r_v * tau0)) * dvs

        integral = _alpha_weighted(kernel, tau_t, f, np.concatenate(
            [[0.0], np.sort(t_k - times[(times > t_k - tau_t) & (times < t_k)])]))
        if not kernel.is_dirac:
            integral /= kernel.mass(tau_t)
        return integral - dv_k

    res_v = -np.inf
    for k in range(len(ts) - 1):
        rate = (dv[k + 1] - dv[k]) / deltas[k]
        res_v = max(res_v, rate - bracket(ts[k], dv[k]))
    return DiniResiduals(max(res_x, 0.0), max(float(res_v), 0.0))


def fit_decay_rate(times, values, window) -> Optional[float]:
    """Least-squares slope of -log(values) against time on the window.

    Samples at machine zero are excluded; returns None when fewer than two
    usable samples remain.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    t_a, t_b = window
    mask = (times >= t_a) & (times <= t_b) & (values > 1e-300)
    if mask.sum() < 2:
        return None
    slope = np.polyfit(times[mask], -np.log(values[mask]), 1)[0]
    return float(slope)
