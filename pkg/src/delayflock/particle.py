"""N-particle integrator for the distributed-delay alignment dynamics.

Positions follow velocities; each velocity relaxes toward a kernel-weighted
average of the other agents' past velocities over the sliding window
[t - tau(t), t], with pair weights normalized per receiving agent.
Integration is fixed-step RK4 over a uniform history buffer (method of
steps): the step is capped at a quarter of the minimal delay, so stage
evaluations never need buffer content newer than the last committed node.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import special
from scipy.interpolate import interp1d

from .kernels import DelayFunction, DelayKernel, InfluenceFunction

_GRID_SNAP = 1e-9  # node-hit tolerance, relative to one grid step


class NumericsError(RuntimeError):
    """The integration produced a non-finite or degenerate quantity."""


class HistoryUnderflowError(RuntimeError):
    """A delayed query reached back before the stored history."""


@dataclass(frozen=True)
class ModelSpec:
    """Everything the delayed dynamics needs: psi, kernel, delay, N and d."""

    psi: InfluenceFunction
    alpha: DelayKernel
    tau: DelayFunction
    n: int
    d: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one agent")
        if self.d < 1:
            raise ValueError("spatial dimension must be at least 1")
        if self.alpha.is_dirac and self.alpha.tau_bar > self.tau.tau_star + 1e-12:
            raise ValueError("point-mass offset exceeds the minimal delay; "
                             "the delayed state would leave the window")
        if self.alpha.mass(self.tau.tau_star) <= 0.0:
            raise ValueError("kernel carries no mass on [0, tau_star]")


@dataclass(frozen=True)
class ParticleState:
    t: float
    x: np.ndarray  # (n, d)
    v: np.ndarray  # (n, d)

    def __post_init__(self):
        if self.x.shape != self.v.shape or self.x.ndim != 2:
            raise ValueError("positions and velocities must both be (n, d)")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.v))):
            raise ValueError("state contains non-finite entries")


# ---------------------------------------------------------------------------
# run configuration


@dataclass(frozen=True)
class RandomInitial:
    """Positions uniform in a centered box, speeds uniform in a ball."""

    box_size: float = 2.0
    speed: float = 1.0


@dataclass(frozen=True)
class ExplicitInitial:
    x: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class SampledHistory:
    """User-sampled trajectories on [-tau0, 0], interpolated onto the grid."""

    times: np.ndarray  # (m,), increasing, times[-1] == 0
    x: np.ndarray      # (m, n, d)
    v: np.ndarray      # (m, n, d)


@dataclass(frozen=True)
class SimConfig:
    model: ModelSpec
    dt: float
    t_end: float
    initial: Union[RandomInitial, ExplicitInitial] = field(default_factory=RandomInitial)
    history: Union[str, SampledHistory] = "line"
    seed: int = 0
    record_every: int = 1
    interpolation: str = "linear"
    w1_velocity_weight: float = 1.0

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        limit = self.model.tau.tau_star / 4.0
        if self.dt > limit * (1.0 + 1e-12):
            raise ValueError(
                f"dt={self.dt} exceeds tau_star/4={limit}; delayed queries "
                "would fall inside the current step")
        if self.t_end <= 0.0:
            raise ValueError("t_end must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be a positive integer")
        if isinstance(self.history, str) and self.history not in ("line", "frozen"):
            raise ValueError("history kind must be 'line', 'frozen', or sampled curves")
        if self.interpolation not in ("linear", "cubic"):
            raise ValueError("interpolation must be 'linear' or 'cubic'")
        if self.w1_velocity_weight < 0.0:
            raise ValueError("w1_velocity_weight must be nonnegative")


# ---------------------------------------------------------------------------
# history buffer


class HistoryBuffer:
    """Sliding window of states on a uniform time grid.

    Node j (an integer grid index) holds the state at time j * dt; the
    newest node is the current state.  Queries at grid nodes return the
    stored snapshots exactly; off-node queries interpolate (linear by
    default, local cubic on request).
    """

    def __init__(self, dt, oldest_index, xs, vs, interpolation="linear"):
        if len(xs) != len(vs) or len(xs) < 2:
            raise ValueError("buffer needs at least two nodes")
        self.dt = float(dt)
        self.interpolation = interpolation
        self._oldest = int(oldest_index)
        self._xs = list(xs)
        self._vs = list(vs)

    # -- basic geometry ----------------------------------------------------

    @property
    def newest_index(self):
        return self._oldest + len(self._xs) - 1

    @property
    def t(self):
        return self.newest_index * self.dt

    @property
    def t_oldest(self):
        return self._oldest * self.dt

    def node_times(self):
        return np.arange(self._oldest, self.newest_index + 1) * self.dt

    def newest(self):
        return self._xs[-1], self._vs[-1]

    def snapshots(self):
        """(times, X, V) for every stored node, stacked."""
        return self.node_times(), np.stack(self._xs), np.stack(self._vs)

    # -- mutation ----------------------------------------------------------

    def append(self, x, v):
        self._xs.append(x)
        self._vs.append(v)

    def evict_before(self, time):
        tol = _GRID_SNAP * self.dt
        while len(self._xs) > 2 and self.t_oldest < time - tol:
            self._xs.pop(0)
            self._vs.pop(0)
            self._oldest += 1

    # -- queries -----------------------------------------------------------

    def _check_lower(self, s):
        if s < self.t_oldest - _GRID_SNAP * self.dt:
            raise HistoryUnderflowError(
                f"query at t={s:.9g} reaches before stored history "
                f"(earliest available t={self.t_oldest:.9g})")

    def query(self, s):
        """State at time s in [t_oldest, t]; exact on grid nodes."""
        self._check_lower(s)
        if s > self.t + _GRID_SNAP * self.dt:
            raise HistoryUnderflowError(
                f"query at t={s:.9g} is newer than the last committed node "
                f"(t={self.t:.9g})")
        f = s / self.dt
        j = round(f)
        if abs(f - j) <= _GRID_SNAP:
            p = int(j) - self._oldest
            p = min(max(p, 0), len(self._xs) - 1)
            return self._xs[p], self._vs[p]
        if self.interpolation == "cubic" and len(self._xs) >= 4:
            return self._query_cubic(f)
        return self._query_linear(f)

    def _query_linear(self, f):
        j0 = math.floor(f)
        p = min(max(int(j0) - self._oldest, 0), len(self._xs) - 2)
        u = f - (self._oldest + p)
        x = (1.0 - u) * self._xs[p] + u * self._xs[p + 1]
        v = (1.0 - u) * self._vs[p] + u * self._vs[p + 1]
        return x, v

    def _query_cubic(self, f):
        # local Lagrange cubic on the four nodes around the query point
        j0 = math.floor(f)
        p = int(j0) - self._oldest - 1
        p = min(max(p, 0), len(self._xs) - 4)
        xi = f - (self._oldest + p)  # in [1, 2] away from clamped edges
        w = np.empty(4)
        for k in range(4):
            num = 1.0
            for m in range(4):
                if m != k:
                    num *= (xi - m) / (k - m)
            w[k] = num
        x = sum(w[k] * self._xs[p + k] for k in range(4))
        v = sum(w[k] * self._vs[p + k] for k in range(4))
        return x, v

    def window(self, s_lo, s_hi):
        """Stored nodes with time strictly inside (s_lo, s_hi), stacked."""
        tol = _GRID_SNAP * self.dt
        j_min = math.floor(s_lo / self.dt) + 1
        while j_min * self.dt <= s_lo + tol:
            j_min += 1
        j_max = math.ceil(s_hi / self.dt) - 1
        while j_max * self.dt >= s_hi - tol:
            j_max -= 1
        j_min = max(j_min, self._oldest)
        j_max = min(j_max, self.newest_index)
        if j_max < j_min:
            n, d = self._xs[-1].shape
            empty = np.empty((0, n, d))
            return np.empty(0), empty, empty.copy()
        lo = j_min - self._oldest
        hi = j_max - self._oldest + 1
        times = np.arange(j_min, j_max + 1) * self.dt
        return times, np.stack(self._xs[lo:hi]), np.stack(self._vs[lo:hi])


def seed_history(model, dt, x0=None, v0=None, kind="line",
                 interpolation="linear", sampled: Optional[SampledHistory] = None):
    """Build the initial buffer covering [-tau0, 0] on the dt grid.

    'line' extends backward along straight-line motion x0 + s * v0,
    'frozen' holds the endpoint state; sampled curves are interpolated
    onto the grid.
    """
    steps_back = int(math.ceil(model.tau.tau0 / dt - 1e-9))
    times = np.arange(-steps_back, 1) * dt
    if sampled is not None:
        st = np.asarray(sampled.times, dtype=float)
        if st[0] > -model.tau.tau0 + 1e-12 or abs(st[-1]) > 1e-12:
            raise ValueError("sampled history must cover [-tau0, 0] and end at 0")
        fx = interp1d(st, np.asarray(sampled.x, dtype=float), axis=0,
                      bounds_error=False, fill_value=(sampled.x[0], sampled.x[-1]))
        fv = interp1d(st, np.asarray(sampled.v, dtype=float), axis=0,
                      bounds_error=False, fill_value=(sampled.v[0], sampled.v[-1]))
        xs = [fx(s) for s in times]
        vs = [fv(s) for s in times]
    else:
        x0 = np.asarray(x0, dtype=float)
        v0 = np.asarray(v0, dtype=float)
        if kind == "line":
            xs = [x0 + s * v0 for s in times]
        elif kind == "frozen":
            xs = [x0.copy() for _ in times]
        else:
            raise ValueError(f"unknown history kind {kind!r}")
        vs = [v0.copy() for _ in times]
    return HistoryBuffer(dt, -steps_back, xs, vs, interpolation=interpolation)


# ---------------------------------------------------------------------------
# forces


def _weight_matrix(psi, x_hist, x_now):
    """Normalized pair weights W[s, i, k] between past positions of k and
    the current position of i; rows sum to one, diagonal is zero."""
    diff = x_hist[:, None, :, :] - x_now[None, :, None, :]
    dist = np.sqrt(np.einsum("sikd,sikd->sik", diff, diff))
    p = psi(dist)
    n = p.shape[1]
    idx = np.arange(n)
    p[:, idx, idx] = 0.0
    denom = p.sum(axis=2)
    if np.any(denom < 1e-300):
        raise NumericsError("influence normalization underflowed; agents are "
                            "beyond numerically representable influence range")
    return p / denom[:, :, None]


def normalized_weights(x_past, x_now_i, psi, i):
    """Weights an agent at x_now_i assigns to past positions x_past.

    Entry i is zero; the rest are the influences of the other agents,
    normalized to sum to one.  A single isolated agent has no neighbours:
    the weights are all zero and a RuntimeWarning flags the degenerate case.
    """
    x_past = np.asarray(x_past, dtype=float)
    x_now_i = np.asarray(x_now_i, dtype=float)
    if not (np.all(np.isfinite(x_past)) and np.all(np.isfinite(x_now_i))):
        raise ValueError("positions must be finite")
    n = x_past.shape[0]
    if not 0 <= i < n:
        raise ValueError(f"agent index {i} out of range for {n} agents")
    if n == 1:
        warnings.warn("single agent: empty neighbour sum, weights are zero",
                      RuntimeWarning, stacklevel=2)
        return np.zeros(1)
    r = np.linalg.norm(x_past - x_now_i, axis=1)
    p = np.asarray(psi(r), dtype=float)
    p[i] = 0.0
    denom = p.sum()
    if denom < 1e-300:
        raise NumericsError("influence normalization underflowed")
    w = p / denom
    w[i] = 0.0
    return w


def alignment_force(t, x_now, v_now, history, model):
    """(n, d) acceleration of every agent at time t given current state
    (x_now, v_now) and committed history for earlier times.

    The window integral is a composite trapezoid over the buffer grid
    restricted to [t - tau(t), t], with an interpolated partial cell at the
    lower endpoint; the upper endpoint uses the supplied current state.
    A point-mass kernel reduces to a single delayed evaluation.
    """
    if model.n == 1:
        return np.zeros_like(v_now)
    kernel = model.alpha
    if kernel.is_dirac:
        xd, vd = history.query(t - kernel.tau_bar)
        w = _weight_matrix(model.psi, xd[None], x_now)[0]
        return w @ vd - v_now

    tau_t = model.tau.value(t)
    s_lo = t - tau_t
    history._check_lower(s_lo)
    x_lo, v_lo = history.query(min(s_lo, history.t))
    ts, xh, vh = history.window(s_lo, t)
    times = np.concatenate([[s_lo], ts, [t]])
    X = np.concatenate([x_lo[None], xh, x_now[None]], axis=0)
    V = np.concatenate([v_lo[None], vh, v_now[None]], axis=0)

    W = _weight_matrix(model.psi, X, x_now)
    avg = np.einsum("sik,skd->sid", W, V)
    integrand = kernel.alpha(t - times)[:, None, None] * (avg - v_now[None, :, :])

    wts = np.empty(len(times))
    wts[0] = 0.5 * (times[1] - times[0])
    wts[-1] = 0.5 * (times[-1] - times[-2])
    if len(times) > 2:
        wts[1:-1] = 0.5 * (times[2:] - times[:-2])
    force = np.tensordot(wts, integrand, axes=(0, 0))
    return force / kernel.mass(tau_t)


def rhs_velocity(i, t, v_i, history, model):
    """Acceleration of agent i at time t with its velocity overridden by
    v_i; positions and the other velocities come from the buffer."""
    x_now, v_now = history.query(t)
    v_now = np.array(v_now, dtype=float)
    v_now[i] = v_i
    return alignment_force(t, np.asarray(x_now, dtype=float), v_now,
                           history, model)[i]


# ---------------------------------------------------------------------------
# stepping


def step(history, model, dt):
    """Advance one RK4 step of size dt; appends the new node and evicts
    nodes that fell out of the maximal delay window."""
    if abs(dt - history.dt) > 1e-12 * history.dt:
        raise ValueError("step size must match the buffer grid")
    t0 = history.t
    x0, v0 = history.newest()

    a1 = alignment_force(t0, x0, v0, history, model)
    xa = x0 + 0.5 * dt * v0
    va = v0 + 0.5 * dt * a1
    a2 = alignment_force(t0 + 0.5 * dt, xa, va, history, model)
    xb = x0 + 0.5 * dt * va
    vb = v0 + 0.5 * dt * a2
    a3 = alignment_force(t0 + 0.5 * dt, xb, vb, history, model)
    xc = x0 + dt * vb
    vc = v0 + dt * a3
    a4 = alignment_force(t0 + dt, xc, vc, history, model)

    x1 = x0 + (dt / 6.0) * (v0 + 2.0 * va + 2.0 * vb + vc)
    v1 = v0 + (dt / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(v1))):
        raise NumericsError(f"non-finite state at t={t0 + dt:.6g}")
    history.append(x1, v1)
    history.evict_before(t0 + dt - model.tau.tau0 - dt)
    return ParticleState(history.t, x1, v1)


# ---------------------------------------------------------------------------
# full runs


@dataclass(frozen=True)
class TrajectoryRecord:
    """Recorded run: times (history nodes first, then strided steps),
    states, and per-node diagnostics."""

    times: np.ndarray   # (m,)
    x: np.ndarray       # (m, n, d)
    v: np.ndarray       # (m, n, d)
    d_x: np.ndarray     # spatial diameter per node
    d_v: np.ndarray     # velocity diameter per node
    v_max: np.ndarray   # max speed per node
    i0: int             # index of the t = 0 node
    config: SimConfig

    @property
    def n_agents(self):
        return self.x.shape[1]

    def state(self, k):
        return ParticleState(float(self.times[k]), self.x[k], self.v[k])

    def forward(self):
        """(times, d_x, d_v) restricted to t >= 0."""
        return self.times[self.i0:], self.d_x[self.i0:], self.d_v[self.i0:]


def pairwise_diameter(points):
    """Largest Euclidean distance between any two rows."""
    if points.shape[0] < 2:
        return 0.0
    diff = points[:, None, :] - points[None, :, :]
    return float(np.sqrt(np.einsum("ijd,ijd->ij", diff, diff)).max())


def _ball_map(u, radius):
    """Map uniforms on [0,1)^d to the uniform distribution on a d-ball."""
    u = np.clip(np.asarray(u, dtype=float), 1e-15, 1.0 - 1e-15)
    d = u.shape[1]
    g = special.erfinv(2.0 * u - 1.0) * math.sqrt(2.0)
    norm = np.linalg.norm(g, axis=1, keepdims=True)
    norm[norm == 0.0] = 1.0
    # chi CDF of |g| is uniform; reuse it as the radial variable
    shell = special.gammainc(d / 2.0, (norm ** 2) / 2.0)
    return radius * shell ** (1.0 / d) * g / norm


def sample_phase_points(u, box_size, speed):
    """Map uniforms on [0,1)^{2d} to (positions, velocities): positions
    uniform in a centered box, velocities uniform in a speed ball."""
    u = np.asarray(u, dtype=float)
    d = u.shape[1] // 2
    x = box_size * (u[:, :d] - 0.5)
    v = _ball_map(u[:, d:], speed)
    return x, v


def resolve_initial(config):
    """Concrete (x0, v0) for a run; random draws are seeded."""
    init = config.initial
    n, d = config.model.n, config.model.d
    if isinstance(init, ExplicitInitial):
        x0 = np.array(init.x, dtype=float).reshape(n, d)
        v0 = np.array(init.v, dtype=float).reshape(n, d)
        if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(v0))):
            raise ValueError("explicit initial data must be finite")
        return x0, v0
    rng = np.random.default_rng(config.seed)
    u = rng.random((n, 2 * d))
    return sample_phase_points(u, init.box_size, init.speed)


def simulate(config: SimConfig) -> TrajectoryRecord:
    """Integrate the configured run and record states plus diagnostics.

    The record starts with every seeded history node (t <= 0) and then one
    node every record_every steps; deterministic for a fixed seed.
    """
    model = config.model
    if isinstance(config.history, SampledHistory):
        history = seed_history(model, config.dt, kind="sampled",
                               interpolation=config.interpolation,
                               sampled=config.history)
    else:
        x0, v0 = resolve_initial(config)
        history = seed_history(model, config.dt, x0, v0, kind=config.history,
                               interpolation=config.interpolation)

    times, xs, vs = [], [], []
    ht, hx, hv = history.snapshots()
    for k in range(len(ht)):
        times.append(ht[k])
        xs.append(hx[k].copy())
        vs.append(hv[k].copy())
    i0 = len(times) - 1

    n_steps = int(math.ceil(config.t_end / config.dt - 1e-9))
    for k in range(1, n_steps + 1):
        state = step(history, model, config.dt)
        if k % config.record_every == 0 or k == n_steps:
            times.append(state.t)
            xs.append(state.x)
            vs.append(state.v)

    times = np.asarray(times)
    X = np.stack(xs)
    V = np.stack(vs)
    d_x = np.array([pairwise_diameter(X[k]) for k in range(len(times))])
    d_v = np.array([pairwise_diameter(V[k]) for k in range(len(times))])
    v_max = np.linalg.norm(V, axis=2).max(axis=1)
    return TrajectoryRecord(times, X, V, d_x, d_v, v_max, i0, config)
