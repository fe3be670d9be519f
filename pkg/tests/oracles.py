"""Reference values computed without the package.

Closed forms are coded from their formulas, and numerical oracles use plain
quadrature or a direct small-step chain, so a bug in the library cannot make
its own reference agree with it.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate


# ---------------------------------------------------------------- two-state chain


def two_state_no_jump(t, q=1.0):
    return math.exp(-q * t)


def two_state_one_jump(t, q=1.0):
    return q * t * math.exp(-q * t)


def two_state_stay(t, q12=1.0, q21=1.0):
    """P(Lambda_t = 1 | Lambda_0 = 1) for a two-state chain."""
    s = q12 + q21
    return q21 / s + q12 / s * math.exp(-s * t)


def at_least_two_events(H, t):
    return 1.0 - math.exp(-H * t) * (1.0 + H * t)


def killed_laplace(alpha, r):
    """int_0^inf exp(-alpha t) exp(-r t) dt."""
    return 1.0 / (alpha + r)


# ---------------------------------------------------------------- overdamped example


def drift_regime2(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= 1, -2 * x, -2 * np.sign(x))


def two_b_integral(x):
    """int_0^x 2 b(s) ds, integrated by hand from the piecewise drift."""
    ax = np.abs(np.asarray(x, dtype=float))
    return np.where(ax <= 1, -2 * ax ** 2, -2 - 4 * (ax - 1))


def _speed_norm():
    unnorm = lambda u: math.exp(float(two_b_integral(u)))
    return 2 * (integrate.quad(unnorm, 0, 1)[0] + integrate.quad(unnorm, 1, np.inf)[0])


_NORM = _speed_norm()


def speed_density(x):
    """exp(int_0^x 2 b) normalized by quadrature."""
    return np.exp(two_b_integral(x)) / _NORM


def speed_bin_masses(edges):
    dens = lambda u: float(speed_density(u))
    return np.array([integrate.quad(dens, a, b)[0] for a, b in zip(edges[:-1], edges[1:])])


def ldp_ratio_k1(x):
    return (-2 * x ** 4 + 1 + x ** 2) / (x ** 2 + 1)


def ldp_ratio_k2(x):
    ax = abs(x)
    return (-8 * ax + 2 - ax ** 3) / (2 * x ** 2 + 1)


# ---------------------------------------------------------------- first passage


def ig_density(gap, t, drift=1.0):
    t = np.asarray(t, dtype=float)
    return gap / np.sqrt(2 * np.pi * t ** 3) * np.exp(-(gap - drift * t) ** 2 / (2 * t))


def ig_cdf(gap, drift=1.0):
    """Distribution function from scipy's inverse Gaussian (mean gap/drift, shape gap^2)."""
    from scipy.stats import invgauss

    mean, shape = gap / drift, gap ** 2
    return invgauss(mean / shape, scale=shape).cdf


# ---------------------------------------------------------------- van der Pol direct chain


def vanderpol_direct_chain(n_paths, t_end, delta, seed, sigma=1.0, H_tilde=1.0,
                           alpha=(1.0, 2.0), beta=(2.0, 1.0)):
    """Regime at ``t_end`` from (0, 0, 1) with switch probability 1 - exp(-q delta) per step.

    Euler-Maruyama on the oscillator with the coefficients written out in
    full; no library code is involved.
    """
    rng = np.random.default_rng(seed)
    x = np.zeros(n_paths)
    y = np.zeros(n_paths)
    k = np.ones(n_paths, dtype=np.int8)
    a = np.array([0.0, alpha[0], alpha[1]])
    b = np.array([0.0, beta[0], beta[1]])
    sq = math.sqrt(delta)
    for _ in range(int(round(t_end / delta))):
        q = np.where(k == 1, np.exp(-np.abs(x) ** 3), H_tilde / (x * x + y * y + 1))
        flip = rng.random(n_paths) < -np.expm1(-q * delta)
        ak, bk = a[k], b[k]
        x, y = x + y * delta, y - (ak * (x * x - 1) * y + bk * x) * delta \
            + sigma * sq * rng.standard_normal(n_paths)
        k = np.where(flip, 3 - k, k).astype(np.int8)
    return k
