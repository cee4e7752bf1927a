"""Mean-field laboratory: empirical-measure solutions of the delayed
Vlasov alignment equation, exact 1-Wasserstein distances, stability and
particle-count convergence experiments, and kinetic flocking checks.

Empirical measures built from particle runs solve the kinetic equation
exactly (up to time discretization), so no separate kinetic integrator
exists here: every kinetic claim is exercised through particles.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.stats import qmc

from . import diagnostics
from .kernels import INFINITE
from .particle import (ExplicitInitial, ModelSpec, RandomInitial, SimConfig,
                       TrajectoryRecord, pairwise_diameter,
                       sample_phase_points, simulate)

LCM_GUARD = 100_000
_ZERO = 1e-15


class LcmGuardError(ValueError):
    """Atom counts whose least common multiple is too large to split."""


class DeterminismError(RuntimeError):
    """Identical initial data produced different trajectories."""


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Equal-weight atoms in phase space."""

    x: np.ndarray  # (n, d)
    v: np.ndarray  # (n, d)

    def __post_init__(self):
        if self.x.ndim != 2 or self.x.shape != self.v.shape:
            raise ValueError("atoms must be two matching (n, d) arrays")
        if self.x.shape[0] < 1:
            raise ValueError("need at least one atom")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.v))):
            raise ValueError("atoms must be finite")

    @property
    def n(self):
        return self.x.shape[0]

    def phase_points(self, velocity_weight=1.0):
        return np.hstack([self.x, velocity_weight * self.v])

    def diameters(self):
        """Support diameters in position and velocity."""
        return pairwise_diameter(self.x), pairwise_diameter(self.v)


@dataclass(frozen=True)
class KineticRun:
    """Per-node empirical snapshots of a particle run."""

    times: np.ndarray
    measures: tuple
    config: SimConfig
    i0: int

    @classmethod
    def from_trajectory(cls, record: TrajectoryRecord):
        measures = tuple(EmpiricalMeasure(record.x[k], record.v[k])
                         for k in range(len(record.times)))
        return cls(record.times, measures, record.config, record.i0)


def wasserstein1(mu: EmpiricalMeasure, nu: EmpiricalMeasure,
                 velocity_weight: float = 1.0) -> float:
    """Exact 1-Wasserstein distance between equal-weight atom clouds.

    Ground cost is the Euclidean norm on concatenated (position,
    weight * velocity) coordinates.  Equal atom counts reduce to an
    optimal assignment; unequal counts are split onto the least common
    multiple before assignment, guarded against blow-up.
    """
    p = mu.phase_points(velocity_weight)
    q = nu.phase_points(velocity_weight)
    n, m = len(p), len(q)
    common = math.lcm(n, m)
    if common > LCM_GUARD:
        raise LcmGuardError(
            f"atom counts {n} and {m} need {common} split atoms "
            f"(> {LCM_GUARD}); resample the measures at equal counts")
    if common != n:
        p = np.repeat(p, common // n, axis=0)
    if common != m:
        q = np.repeat(q, common // m, axis=0)
    cost = cdist(p, q)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def empirical_solution(config: SimConfig) -> KineticRun:
    """Run the particle system and wrap its snapshots as empirical
    measures; these are exact measure-valued solutions of the kinetic
    alignment equation up to time-discretization error."""
    if config.model.n < 2:
        raise ValueError("empirical solutions need at least two atoms")
    return KineticRun.from_trajectory(simulate(config))


def support_radii(run: KineticRun):
    """Per-node maximal position and velocity norms of the atom cloud."""
    r_x = np.array([np.linalg.norm(m.x, axis=1).max() for m in run.measures])
    r_v = np.array([np.linalg.norm(m.v, axis=1).max() for m in run.measures])
    return r_x, r_v


# ---------------------------------------------------------------------------
# experiments


def _ratio(sup_w1, denom):
    if denom < _ZERO:
        if sup_w1 > 1e-12:
            raise DeterminismError(
                "runs from identical initial data drifted apart "
                f"(distance {sup_w1:.3e})")
        return 1.0
    return sup_w1 / denom


def _w1_series(run_a: KineticRun, run_b: KineticRun, velocity_weight,
               stride=1):
    sel = np.arange(run_a.i0, len(run_a.times), stride)
    if sel[-1] != len(run_a.times) - 1:
        sel = np.append(sel, len(run_a.times) - 1)
    times = run_a.times[sel]
    w1 = np.array([wasserstein1(run_a.measures[k], run_b.measures[k],
                                velocity_weight) for k in sel])
    hist = np.arange(0, run_a.i0 + 1)
    w1_init = np.array([wasserstein1(run_a.measures[k], run_b.measures[k],
                                     velocity_weight) for k in hist])
    return times, w1, float(w1_init.max())


@dataclass
class StabilityResult:
    times: np.ndarray
    w1: np.ndarray
    w1_initial_max: float
    ratio: float


def stability_experiment(config: SimConfig,
                         perturbation: Callable[[np.ndarray, np.ndarray], tuple],
                         horizon: float, stride: int = 1) -> StabilityResult:
    """Distance growth between a run and a perturbed-initial-data run.

    Both runs share the step size, grid and horizon.  Returns the distance
    time series and the empirical stability factor: the largest distance
    up to the horizon over the largest distance across the initial window
    (defined as 1 for an unperturbed pair).
    """
    from .particle import resolve_initial

    cfg = replace(config, t_end=horizon)
    x0, v0 = resolve_initial(cfg)
    xp, vp = perturbation(x0.copy(), v0.copy())
    xp = np.asarray(xp, dtype=float)
    vp = np.asarray(vp, dtype=float)
    if not (np.all(np.isfinite(xp)) and np.all(np.isfinite(vp))):
        raise ValueError("perturbed initial data must stay finite")
    run_a = empirical_solution(replace(cfg, initial=ExplicitInitial(x0, v0)))
    run_b = empirical_solution(replace(cfg, initial=ExplicitInitial(xp, vp)))
    times, w1, w1_init = _w1_series(run_a, run_b, cfg.w1_velocity_weight, stride)
    ratio = _ratio(float(w1.max()), w1_init)
    return StabilityResult(times, w1, w1_init, ratio)


def nested_initial_sets(model: ModelSpec, initial: RandomInitial, n_max: int,
                        seed: int):
    """Low-discrepancy phase-space sample whose first-n prefixes are the
    nested n-atom initial sets (the n-set refines into the 2n-set)."""
    dim = 2 * model.d
    engine = qmc.Sobol(d=dim, scramble=True, seed=seed)
    m = 1 << max(0, (n_max - 1).bit_length())
    u = engine.random(m)[:n_max]
    return sample_phase_points(u, initial.box_size, initial.speed)


def _run_for_count(args):
    return empirical_solution(args)


@dataclass
class MeanFieldRow:
    n: int
    t: float
    w1: float
    ratio: float


def mean_field_experiment(base: SimConfig, n_list: Sequence[int],
                          horizon: float, stride: int = 1,
                          jobs: int = 1):
    """Cauchy convergence of empirical solutions under nested sampling.

    For every consecutive pair (n, n') the row reports the final-time
    distance between the two runs and the empirical stability factor
    (largest distance over the run relative to the initial window).
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 2:
        raise ValueError("need at least two particle counts")
    if any(b < a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("particle counts must be nondecreasing")
    if min(n_list) < 2:
        raise ValueError("particle counts must be at least 2")
    if not isinstance(base.initial, RandomInitial):
        raise ValueError("the convergence experiment draws its own nested "
                         "initial data; use a random initial spec")
    x_all, v_all = nested_initial_sets(base.model, base.initial,
                                       max(n_list), base.seed)
    configs = {}
    for n in sorted(set(n_list)):
        configs[n] = replace(
            base, t_end=horizon,
            model=replace(base.model, n=n),
            initial=ExplicitInitial(x_all[:n].copy(), v_all[:n].copy()))
    counts = sorted(configs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_for_count, [configs[n] for n in counts]))
        runs = dict(zip(counts, results))
    else:
        runs = {n: empirical_solution(configs[n]) for n in counts}

    rows = []
    for n_a, n_b in zip(n_list, n_list[1:]):
        if n_a == n_b:
            rows.append(MeanFieldRow(n=n_a, t=horizon, w1=0.0, ratio=1.0))
            continue
        times, w1, w1_init = _w1_series(runs[n_a], runs[n_b],
                                        base.w1_velocity_weight, stride)
        rows.append(MeanFieldRow(n=n_a, t=float(times[-1]),
                                 w1=float(w1[-1]),
                                 ratio=_ratio(float(w1.max()), w1_init)))
    return rows


# ---------------------------------------------------------------------------
# kinetic flocking


@dataclass
class KineticFlockingReport:
    lhs: float
    rhs: float                     # may be INFINITE
    holds: bool
    d_v_initial_max: float
    c_hat: Optional[float]
    decay_verified: bool
    gamma_fitted: Optional[float]
    gamma_forecast: Optional[float]        # crowding factor 1 (many-atom limit)
    gamma_forecast_half: Optional[float]   # n-uniform factor 1/2

    def to_json_dict(self):
        rhs = "inf" if math.isinf(self.rhs) else self.rhs
        return {"lhs": self.lhs, "rhs": rhs, "holds": self.holds,
                "d_v_initial_max": self.d_v_initial_max, "c_hat": self.c_hat,
                "decay_verified": self.decay_verified,
                "gamma_fitted": self.gamma_fitted,
                "gamma_forecast": self.gamma_forecast,
                "gamma_forecast_half": self.gamma_forecast_half}


def kinetic_flocking_check(run: KineticRun, model: ModelSpec) -> KineticFlockingReport:
    """Kinetic analogue of the flocking condition on an empirical run.

    The support diameters of the atom cloud coincide with the particle
    diameters, and the condition carries no crowding factor.  The decay
    certificate is the largest rate c with velocity diameter below
    (initial max) * exp(-c t) at every recorded node.
    """
    times = run.times
    hist = np.nonzero(times <= 1e-12)[0]
    z = times[hist]
    d_x = np.array([run.measures[k].diameters()[0] for k in hist])
    d_v = np.array([run.measures[k].diameters()[1] for k in hist])
    r_v0 = max(np.linalg.norm(run.measures[k].v, axis=1).max() for k in hist)
    lhs, rhs = diagnostics.condition_sides(z, d_x, d_v, r_v0, model, beta=1.0)
    holds = lhs < rhs

    fwd = np.nonzero(times > 1e-12)[0]
    t_fwd = times[fwd]
    dv_fwd = np.array([run.measures[k].diameters()[1] for k in fwd])
    m0 = float(d_v.max())

    if m0 <= 1e-300:
        c_hat = None
        decay_verified = bool(np.all(dv_fwd <= 1e-12))
    else:
        with np.errstate(divide="ignore"):
            rates = -np.log(np.maximum(dv_fwd, 1e-300) / m0) / t_fwd
        c_hat = float(rates.min()) if len(rates) else None
        decay_verified = c_hat is not None and c_hat > 0.0

    gamma_fitted = diagnostics.fit_decay_rate(t_fwd, dv_fwd,
                                              (0.0, float(times[-1])))
    forecast = forecast_half = None
    if holds:
        d_star = diagnostics.locate_d_star(z, d_x, d_v, r_v0, model, 1.0, lhs)
        if d_star is not None:
            forecast = diagnostics.predicted_rate(d_star, r_v0, model, 1.0)
        d_star_half = diagnostics.locate_d_star(z, d_x, d_v, r_v0, model, 0.5, lhs)
        if d_star_half is not None:
            forecast_half = diagnostics.predicted_rate(d_star_half, r_v0, model, 0.5)
    return KineticFlockingReport(
        lhs=lhs, rhs=rhs, holds=holds, d_v_initial_max=m0, c_hat=c_hat,
        decay_verified=decay_verified, gamma_fitted=gamma_fitted,
        gamma_forecast=forecast, gamma_forecast_half=forecast_half)
