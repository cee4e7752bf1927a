"""Model ingredients for delayed flocking dynamics.

Pair-influence functions of distance, memory kernels over the delay
window, delay schedules, and the scalar special functions (principal
product logarithm, delayed-decay rate) used by the stability
diagnostics.  Everything here is immutable and pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

#: distinguished value for divergent (heavy-tail) integrals
INFINITE = math.inf


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


# ---------------------------------------------------------------------------
# influence functions


class InfluenceFunction:
    """Positive, nonincreasing, Lipschitz influence of pair distance, 1 at 0.

    Subclasses supply closed forms for pointwise evaluation, the tail
    integral over [d, oo), and definite integrals over finite intervals.
    Whether the tail integral converges is an analytic fact of the family
    (the ``integrable`` flag), never inferred numerically.
    """

    tag: str = ""

    @property
    def integrable(self) -> bool:
        raise NotImplementedError

    def _eval(self, r):
        raise NotImplementedError

    def _tail(self, d):
        raise NotImplementedError

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0.0):
            raise DomainError("influence function needs a nonnegative distance")
        out = self._eval(r)
        return float(out) if out.ndim == 0 else out

    def tail(self, d):
        """Integral of the influence over [d, oo); INFINITE for heavy tails."""
        d = np.asarray(d, dtype=float)
        if np.any(d < 0.0):
            raise DomainError("tail integral needs a nonnegative lower bound")
        if not self.integrable:
            return INFINITE if d.ndim == 0 else np.full(d.shape, INFINITE)
        out = self._tail(d)
        return float(out) if np.ndim(out) == 0 else out

    def integral(self, a, b):
        """Signed integral of the influence over [a, b] (closed form)."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if np.any(a < 0.0) or np.any(b < 0.0):
            raise DomainError("integration bounds must be nonnegative")
        out = self._integral(a, b)
        return float(out) if np.ndim(out) == 0 else out

    def _integral(self, a, b):
        # integrable families come for free via tail differences
        return self._tail(a) - self._tail(b)


@dataclass(frozen=True)
class CuckerSmale(InfluenceFunction):
    """(1 + r^2)^(-beta).  Heavy tail (non-integrable) for beta <= 1/2."""

    beta: float
    tag = "cucker_smale"

    def __post_init__(self):
        if self.beta < 0.0:
            raise DomainError("cucker_smale: beta must be nonnegative "
                              "(negative beta gives an increasing influence)")

    @property
    def integrable(self):
        return self.beta > 0.5

    def _eval(self, r):
        return (1.0 + r * r) ** (-self.beta)

    def _tail(self, d):
        # int_d^oo (1+z^2)^(-beta) dz = (1/2) B(u; beta-1/2, 1/2), u = 1/(1+d^2)
        a = self.beta - 0.5
        u = 1.0 / (1.0 + d * d)
        return 0.5 * special.beta(a, 0.5) * special.betainc(a, 0.5, u)

    def _integral(self, a, b):
        if self.integrable:
            return self._tail(a) - self._tail(b)
        quad = np.vectorize(
            lambda lo, hi: integrate.quad(self._eval, lo, hi, limit=200)[0]
        )
        return quad(a, b)


@dataclass(frozen=True)
class PowerTail(InfluenceFunction):
    """(1 + r)^(-p).  Non-integrable for p <= 1."""

    p: float
    tag = "power_tail"

    def __post_init__(self):
        if self.p < 0.0:
            raise DomainError("power_tail: exponent p must be nonnegative")

    @property
    def integrable(self):
        return self.p > 1.0

    def _eval(self, r):
        return (1.0 + r) ** (-self.p)

    def _tail(self, d):
        return (1.0 + d) ** (1.0 - self.p) / (self.p - 1.0)

    def _integral(self, a, b):
        if self.p == 1.0:
            return np.log1p(b) - np.log1p(a)
        q = 1.0 - self.p
        return ((1.0 + b) ** q - (1.0 + a) ** q) / q


@dataclass(frozen=True)
class Exponential(InfluenceFunction):
    """exp(-r)."""

    tag = "exponential"

    @property
    def integrable(self):
        return True

    def _eval(self, r):
        return np.exp(-r)

    def _tail(self, d):
        return np.exp(-d)


@dataclass(frozen=True)
class ConstantInfluence(InfluenceFunction):
    """Identically 1 (all-to-all coupling, heavy tail)."""

    tag = "constant"

    @property
    def integrable(self):
        return False

    def _eval(self, r):
        return np.ones_like(r)

    def _integral(self, a, b):
        return b - a


def evaluate_psi(psi: InfluenceFunction, r):
    """Evaluate the influence function at distance(s) r >= 0."""
    return psi(r)


def tail_integral(psi: InfluenceFunction, d):
    """Integral of psi over [d, oo); INFINITE when psi is non-integrable."""
    return psi.tail(d)


# ---------------------------------------------------------------------------
# memory kernels on the delay window


class DelayKernel:
    """Nonnegative weight over elapsed delay s in [0, tau0]."""

    tag: str = ""
    is_dirac: bool = False

    def alpha(self, s):
        raise NotImplementedError

    def mass(self, upto):
        """Integral of the kernel over [0, upto]."""
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantKernel(DelayKernel):
    level: float = 1.0
    tag = "constant"

    def __post_init__(self):
        if self.level <= 0.0:
            raise DomainError("constant kernel level must be positive")

    def alpha(self, s):
        s = np.asarray(s, dtype=float)
        return np.full(s.shape, self.level) if s.ndim else self.level

    def mass(self, upto):
        return self.level * upto


@dataclass(frozen=True)
class ExponentialDecayKernel(DelayKernel):
    rate: float
    tag = "exponential"

    def __post_init__(self):
        if self.rate < 0.0:
            raise DomainError("exponential kernel rate must be nonnegative")

    def alpha(self, s):
        return np.exp(-self.rate * np.asarray(s, dtype=float))

    def mass(self, upto):
        if self.rate == 0.0:
            return float(upto)
        return -math.expm1(-self.rate * upto) / self.rate


@dataclass(frozen=True)
class DiracKernel(DelayKernel):
    """Unit point mass at elapsed delay tau_bar (pointwise-delay limit)."""

    tau_bar: float
    tag = "dirac"
    is_dirac = True

    def __post_init__(self):
        if self.tau_bar <= 0.0:
            raise DomainError("dirac kernel offset must be positive")

    def alpha(self, s):
        raise DomainError("point-mass kernel has no density; evaluate by "
                          "substitution at the offset instead")

    def mass(self, upto):
        # total mass once the window reaches the atom
        return 1.0 if upto >= self.tau_bar - 1e-12 else 0.0


# ---------------------------------------------------------------------------
# delay schedules


class DelayFunction:
    """Nonincreasing delay schedule, bounded between tau_star and tau0."""

    tag: str = ""

    @property
    def tau_star(self) -> float:
        raise NotImplementedError

    @property
    def tau0(self) -> float:
        raise NotImplementedError

    def value(self, t: float) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantDelay(DelayFunction):
    tau_bar: float
    tag = "constant_delay"

    def __post_init__(self):
        if self.tau_bar <= 0.0:
            raise DomainError("delay must be positive")

    @property
    def tau_star(self):
        return self.tau_bar

    @property
    def tau0(self):
        return self.tau_bar

    def value(self, t):
        return self.tau_bar


@dataclass(frozen=True)
class SmoothDecreasingDelay(DelayFunction):
    """tau(t) = floor + (start - floor) * exp(-rate * t), start >= floor > 0."""

    floor: float
    start: float
    rate: float
    tag = "smooth_decreasing"

    def __post_init__(self):
        if self.floor <= 0.0:
            raise DomainError("delay floor must be positive")
        if self.start < self.floor:
            raise DomainError("initial delay must not be below the floor "
                              "(the schedule must be nonincreasing)")
        if self.rate < 0.0:
            raise DomainError("delay relaxation rate must be nonnegative")

    @property
    def tau_star(self):
        return self.floor

    @property
    def tau0(self):
        return self.start

    def value(self, t):
        return self.floor + (self.start - self.floor) * math.exp(-self.rate * t)


def h_of_t(kernel: DelayKernel, tau: DelayFunction, t: float) -> float:
    """Kernel mass over the current window [0, tau(t)] (unit for point mass)."""
    if t < 0.0:
        raise DomainError("h(t) is defined for t >= 0")
    return kernel.mass(tau.value(t))


# ---------------------------------------------------------------------------
# scalar special functions for decay-rate certificates


def lambert_w0(z: float) -> float:
    """Principal branch of the product logarithm on [0, oo).

    Solves w * exp(w) = z by Halley iteration from the initial guess
    log(1 + z); residual below 1e-12 * max(1, z) over the whole range.
    """
    if z < 0.0:
        raise DomainError("only the nonnegative branch is supported")
    if z == 0.0:
        return 0.0
    w = math.log1p(z)
    for _ in range(80):
        ew = math.exp(w)
        f = w * ew - z
        denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0)
        dw = f / denom
        w -= dw
        if abs(dw) <= 1e-16 * (1.0 + abs(w)):
            break
    return w


def halanay_rate(a: float, tau0: float) -> float:
    """Decay exponent for u' <= a * sup of u over [t - tau0, t] minus u.

    gamma = 1 - W(a * tau0 * exp(tau0)) / tau0 with W the product
    logarithm; positive whenever 0 < a < 1.
    """
    if not 0.0 < a < 1.0:
        raise DomainError("delayed-decay rate needs 0 < a < 1")
    if tau0 <= 0.0:
        raise DomainError("delay bound tau0 must be positive")
    return 1.0 - lambert_w0(a * tau0 * math.exp(tau0)) / tau0


def halanay_decay_oracle(a: float, tau0: float, steps_per_delay: int = 1000,
                         horizon_delays: float = 20.0):
    """Explicit-Euler solution of u' = a * max over [t - tau0, t] of u - u.

    Starts from u = 1 on [-tau0, 0].  Returns (t, u) on [0, horizon].
    Serves as an independent check that the certified rate is honoured.
    """
    if not 0.0 < a < 1.0:
        raise DomainError("delayed-decay oracle needs 0 < a < 1")
    if tau0 <= 0.0:
        raise DomainError("delay bound tau0 must be positive")
    dt = tau0 / steps_per_delay
    m = steps_per_delay
    n = int(round(horizon_delays * steps_per_delay))
    u = np.ones(m + n + 1)
    for k in range(n):
        j = m + k
        window_max = u[j - m:j + 1].max()
        u[j + 1] = u[j] + dt * (a * window_max - u[j])
    t = np.arange(n + 1) * dt
    return t, u[m:]
