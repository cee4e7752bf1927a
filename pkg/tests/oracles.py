"""Independent oracles used by the test suite.

Everything here is deliberately written against flat arrays and explicit
loops, separate from the package implementations it checks.
"""

import itertools
import math

import numpy as np


def lambert_bisect(z, tol=1e-14):
    """Solve w * exp(w) = z on [0, oo) by plain bisection."""
    if z == 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while hi * math.exp(hi) < z:
        hi *= 2.0
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid * math.exp(mid) < z:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def simpson(f, a, b, n=10000):
    """Composite Simpson rule with a vectorized integrand."""
    if n % 2:
        n += 1
    xs = np.linspace(a, b, n + 1)
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return (b - a) / n / 3.0 * float(np.dot(w, f(xs)))


def condition_sides_simpson(d_x_fn, d_v_fn, psi_tail, alpha_fn, h0, beta,
                            r_v, tau0, tau_star, n_outer=10000):
    """High-resolution quadrature of both sides of the flocking condition
    for continuous diameter curves on [-tau0, 0]."""
    def trailing(s_values):
        out = np.empty_like(s_values)
        for k, s in enumerate(s_values):
            if s <= 0.0:
                out[k] = 0.0
            else:
                out[k] = simpson(lambda z: np.vectorize(d_v_fn)(z), -s, 0.0, 256)
        return out

    lhs = h0 * d_v_fn(0.0) + simpson(
        lambda s: np.vectorize(alpha_fn)(s) * trailing(np.atleast_1d(s)),
        0.0, tau0, n_outer)
    rhs = beta * simpson(
        lambda s: np.vectorize(alpha_fn)(s) *
        np.vectorize(lambda si: psi_tail(d_x_fn(-si) + r_v * tau0))(s),
        0.0, tau_star, n_outer)
    return lhs, rhs


def w1_bruteforce(p, q):
    """Minimal mean transport cost between equal-weight point clouds by
    exhaustive search over permutations (after lcm splitting)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n, m = len(p), len(q)
    common = math.lcm(n, m)
    p = np.repeat(p, common // n, axis=0)
    q = np.repeat(q, common // m, axis=0)
    best = math.inf
    for perm in itertools.permutations(range(common)):
        cost = 0.0
        for i, j in enumerate(perm):
            cost += float(np.linalg.norm(p[i] - q[j]))
            if cost >= best:
                break
        best = min(best, cost)
    return best / common


def discrete_delay_reference(psi_fn, tau_bar, x0, v0, dt, n_steps):
    """Reference RK4 integrator for the pointwise-delay alignment system,
    with straight-line history backfill and linear interpolation of
    committed nodes at the delayed times.

    Returns (times, X, V) on the committed grid t >= 0.
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    n, d = x0.shape
    back = int(math.ceil(tau_bar / dt - 1e-9))
    total = back + n_steps + 1
    X = np.empty((total, n, d))
    V = np.empty((total, n, d))
    for k in range(back + 1):
        s = (k - back) * dt
        X[k] = x0 + s * v0
        V[k] = v0

    def lookup(A, committed, t):
        f = t / dt + back
        j = int(round(f))
        if abs(f - j) <= 1e-9:
            return A[j]
        j0 = int(math.floor(f))
        u = f - j0
        return (1.0 - u) * A[j0] + u * A[j0 + 1]

    def force(t_eval, x_now, v_now, committed):
        xd = lookup(X, committed, t_eval - tau_bar)
        vd = lookup(V, committed, t_eval - tau_bar)
        out = np.zeros((n, d))
        for i in range(n):
            wts = np.zeros(n)
            for k in range(n):
                if k != i:
                    wts[k] = psi_fn(float(np.linalg.norm(xd[k] - x_now[i])))
            wts /= wts.sum()
            for k in range(n):
                out[i] += wts[k] * (vd[k] - v_now[i])
        return out

    for step_idx in range(n_steps):
        j = back + step_idx
        t = step_idx * dt
        x, v = X[j], V[j]
        a1 = force(t, x, v, j)
        xa, va = x + 0.5 * dt * v, v + 0.5 * dt * a1
        a2 = force(t + 0.5 * dt, xa, va, j)
        xb, vb = x + 0.5 * dt * va, v + 0.5 * dt * a2
        a3 = force(t + 0.5 * dt, xb, vb, j)
        xc, vc = x + dt * vb, v + dt * a3
        a4 = force(t + dt, xc, vc, j)
        X[j + 1] = x + dt / 6.0 * (v + 2.0 * va + 2.0 * vb + vc)
        V[j + 1] = v + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)

    times = np.arange(n_steps + 1) * dt
    return times, X[back:], V[back:]
