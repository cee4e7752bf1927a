"""delayflock: a simulation and verification lab for flocking dynamics
with distributed time delay and normalized communication weights.

The particle integrator advances the delayed N-agent system by the method
of steps; diagnostics evaluate the sufficient flocking condition and decay
certificates; the mean-field module probes the kinetic limit through
empirical measures and exact 1-Wasserstein distances.
"""

__version__ = "0.1.0"

from .kernels import (INFINITE, ConstantDelay, ConstantInfluence,
                      ConstantKernel, CuckerSmale, DelayFunction, DelayKernel,
                      DiracKernel, DomainError, Exponential,
                      ExponentialDecayKernel, InfluenceFunction, PowerTail,
                      SmoothDecreasingDelay, evaluate_psi, h_of_t,
                      halanay_decay_oracle, halanay_rate, lambert_w0,
                      tail_integral)
from .particle import (ExplicitInitial, HistoryBuffer, HistoryUnderflowError,
                       ModelSpec, NumericsError, ParticleState, RandomInitial,
                       SampledHistory, SimConfig, TrajectoryRecord,
                       alignment_force, normalized_weights, rhs_velocity,
                       seed_history, simulate, step)
from .diagnostics import (DiniResiduals, FlockingReport, PreconditionError,
                          beta_n, diameters, fit_decay_rate,
                          flocking_condition, lyapunov, max_speed,
                          verify_dini_inequalities)
from .meanfield import (EmpiricalMeasure, KineticFlockingReport, KineticRun,
                        LcmGuardError, MeanFieldRow, StabilityResult,
                        empirical_solution, kinetic_flocking_check,
                        mean_field_experiment, stability_experiment,
                        support_radii, wasserstein1)
from .config import ConfigError, load_config, parse_config

__all__ = [name for name in dir() if not name.startswith("_")]
