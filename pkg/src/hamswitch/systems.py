"""Built-in systems with analytic oracles, plus a name-keyed registry.

All built-ins are one-dimensional (``d = 1``); their callables follow the
batched conventions of :mod:`hamswitch.model`.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from .errors import ConfigurationError, UnknownSystemError
from .model import SystemSpec


def _scalar(x):
    return np.asarray(x, dtype=float)[..., 0]


def _mat(value, x):
    """Broadcast per-point scalars to ``(..., 1, 1)`` matrices."""
    value = np.asarray(value, dtype=float)
    return np.broadcast_to(value, np.shape(x)[:-1])[..., None, None]


def _const_noise(sigma):
    def noise(x, y, k):
        return np.full(np.shape(x)[:-1] + (1, 1), float(sigma))
    return noise


def _check_positive(**values):
    for name, v in values.items():
        if not v > 0:
            raise ConfigurationError(f"{name} must be positive, got {v!r}")


def langevin_2regime(v1: float = 1.0, v2: float = 1.2, sigma: float = 1.0) -> SystemSpec:
    """Two-regime Langevin system with quartic potential ``v_k x**4``.

    Damping is constant per regime (2 and 1). Switching:
    ``q12 = 2 - exp(-|x| - y**2)`` and ``q21 = 1 / (x**2 + |y| + 1)``, so the
    dominating rates are 2 and 1. The quartic form is used on the whole line,
    which satisfies the large-``|x|`` requirement trivially.
    """
    _check_positive(v1=v1, v2=v2, sigma=sigma)
    v = {1: float(v1), 2: float(v2)}
    c = {1: 2.0, 2: 1.0}

    def potential(x, k):
        return v[k] * _scalar(x) ** 4

    def grad_potential(x, k):
        return 4.0 * v[k] * np.asarray(x, dtype=float) ** 3

    def damping(x, y, k):
        return np.full(np.shape(x)[:-1] + (1, 1), c[k])

    def q_row(k, x, y):
        xs, ys = _scalar(x), _scalar(y)
        if k == 1:
            return [(2, 2.0 - np.exp(-np.abs(xs) - ys ** 2))]
        return [(1, 1.0 / (xs ** 2 + np.abs(ys) + 1.0))]

    def qhat_row(k):
        return [(2, 2.0)] if k == 1 else [(1, 1.0)]

    return SystemSpec(
        dim=1, grad_potential=grad_potential, damping=damping, noise=_const_noise(sigma),
        q_row=q_row, qhat_row=qhat_row, H_bound=2.0, potential=potential, regimes=(1, 2),
        name="langevin-2regime", params=dict(v1=v1, v2=v2, sigma=sigma),
    )


def vanderpol_2regime(H_tilde: float = 1.0, sigma: float = 1.0,
                      alpha: tuple[float, float] = (1.0, 2.0),
                      beta: tuple[float, float] = (2.0, 1.0)) -> SystemSpec:
    """Stochastic van der Pol oscillator with state-dependent switching.

    ``c = alpha_k (x**2 - 1)``, ``V = beta_k x**2 / 2``,
    ``q12 = exp(-|x|**3)``, ``q21 = H_tilde / (x**2 + y**2 + 1)``.
    """
    _check_positive(H_tilde=H_tilde, sigma=sigma)
    a = {1: float(alpha[0]), 2: float(alpha[1])}
    b = {1: float(beta[0]), 2: float(beta[1])}
    H_tilde = float(H_tilde)

    def potential(x, k):
        return 0.5 * b[k] * _scalar(x) ** 2

    def grad_potential(x, k):
        return b[k] * np.asarray(x, dtype=float)

    def damping(x, y, k):
        return _mat(a[k] * (_scalar(x) ** 2 - 1.0), x)

    def q_row(k, x, y):
        xs, ys = _scalar(x), _scalar(y)
        if k == 1:
            return [(2, np.exp(-np.abs(xs) ** 3))]
        return [(1, H_tilde / (xs ** 2 + ys ** 2 + 1.0))]

    def qhat_row(k):
        return [(2, 1.0)] if k == 1 else [(1, H_tilde)]

    return SystemSpec(
        dim=1, grad_potential=grad_potential, damping=damping, noise=_const_noise(sigma),
        q_row=q_row, qhat_row=qhat_row, H_bound=max(1.0, H_tilde), potential=potential,
        regimes=(1, 2), name="vanderpol-2regime",
        params=dict(H_tilde=H_tilde, sigma=sigma, alpha=tuple(alpha), beta=tuple(beta)),
    )


def overdamped_drift_regime2(x):
    """``-V'(x, 2)``: ``-2x`` on ``|x| <= 1`` and ``-2 sgn(x)`` outside."""
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= 1.0, -2.0 * x, -2.0 * np.sign(x))


def overdamped_langevin(rate_cap: float | None = 50.0) -> SystemSpec:
    """Overdamped Langevin system ``dX = -V'(X, k) dt + dW`` with two regimes.

    ``V(x,1) = x**4/4``; ``V(x,2) = x**2 + 1`` on ``|x| <= 1`` and ``2|x|``
    outside. Switching ``q12 = 1`` and ``q21 = |x|``. The latter is unbounded,
    so simulation needs ``rate_cap``: ``q21 = min(|x|, rate_cap)``. With
    ``rate_cap=None`` the exact rates are kept; such a spec supports generator
    evaluation but has an infinite dominating bound and cannot be simulated.
    """
    cap = math.inf if rate_cap is None else float(rate_cap)
    if not cap >= 1.0:
        raise ConfigurationError(f"rate_cap must be at least 1, got {rate_cap!r}")

    def potential(x, k):
        xs = _scalar(x)
        if k == 1:
            return xs ** 4 / 4.0
        return np.where(np.abs(xs) <= 1.0, xs ** 2 + 1.0, 2.0 * np.abs(xs))

    def grad_potential(x, k):
        x = np.asarray(x, dtype=float)
        if k == 1:
            return x ** 3
        return -overdamped_drift_regime2(x)

    def damping(x, y, k):
        return np.zeros(np.shape(x)[:-1] + (1, 1))

    def q_row(k, x, y):
        if k == 1:
            return [(2, 1.0)]
        return [(1, np.minimum(np.abs(_scalar(x)), cap))]

    def qhat_row(k):
        return [(2, 1.0)] if k == 1 else [(1, cap)]

    return SystemSpec(
        dim=1, grad_potential=grad_potential, damping=damping, noise=_const_noise(1.0),
        q_row=q_row, qhat_row=qhat_row, H_bound=max(1.0, cap), potential=potential,
        overdamped=True, regimes=(1, 2), name="overdamped-langevin",
        params=dict(rate_cap=rate_cap),
    )


def ornstein_uhlenbeck(theta: float = 1.0, sigma: float = 1.0) -> SystemSpec:
    """One-regime sanity system ``dX = -theta X dt + sigma dW``."""
    _check_positive(theta=theta, sigma=sigma)

    def potential(x, k):
        return 0.5 * theta * _scalar(x) ** 2

    def grad_potential(x, k):
        return theta * np.asarray(x, dtype=float)

    return SystemSpec(
        dim=1, grad_potential=grad_potential,
        damping=lambda x, y, k: np.zeros(np.shape(x)[:-1] + (1, 1)),
        noise=_const_noise(sigma), q_row=lambda k, x, y: [], qhat_row=lambda k: [],
        H_bound=1.0, potential=potential, overdamped=True, regimes=(1,),
        name="ornstein-uhlenbeck", params=dict(theta=theta, sigma=sigma),
    )


def constant_switching(q12: float = 1.0, q21: float = 1.0, qhat12: float | None = None,
                       qhat21: float | None = None, sigma: float = 0.0) -> SystemSpec:
    """Free particle with state-independent two-regime switching.

    No potential and no damping; ``sigma = 0`` leaves a pure transport motion
    whose regime path is a plain continuous-time Markov chain. Dominating rates
    default to the true rates; larger values exercise thinning.
    """
    qhat12 = q12 if qhat12 is None else qhat12
    qhat21 = q21 if qhat21 is None else qhat21
    _check_positive(qhat12=qhat12, qhat21=qhat21)
    if q12 < 0 or q21 < 0 or q12 > qhat12 or q21 > qhat21:
        raise ConfigurationError("rates must satisfy 0 <= q <= qhat")
    rates = {1: (2, float(q12)), 2: (1, float(q21))}
    bounds = {1: (2, float(qhat12)), 2: (1, float(qhat21))}

    def q_row(k, x, y):
        return [rates[k]]

    def qhat_row(k):
        return [bounds[k]]

    return SystemSpec(
        dim=1, grad_potential=lambda x, k: np.zeros(np.shape(x)),
        damping=lambda x, y, k: np.zeros(np.shape(x)[:-1] + (1, 1)),
        noise=_const_noise(sigma), q_row=q_row, qhat_row=qhat_row,
        H_bound=max(qhat12, qhat21), potential=lambda x, k: np.zeros(np.shape(x)[:-1]),
        regimes=(1, 2), name="constant-switching",
        params=dict(q12=q12, q21=q21, qhat12=qhat12, qhat21=qhat21, sigma=sigma),
    )


REGISTRY = {
    "langevin-2regime": langevin_2regime,
    "vanderpol-2regime": vanderpol_2regime,
    "overdamped-langevin": overdamped_langevin,
    "ornstein-uhlenbeck": ornstein_uhlenbeck,
    "constant-switching": constant_switching,
}


def get_system(name: str, **params) -> SystemSpec:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise UnknownSystemError(
            f"unknown system {name!r}; available: {', '.join(sorted(REGISTRY))}"
        ) from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for {name}: {exc}") from None


def speed_density_regime2(x) -> np.ndarray:
    """Normalized invariant density of the frozen regime-2 overdamped system."""
    x = np.asarray(x, dtype=float)
    unnorm = np.where(np.abs(x) <= 1.0, np.exp(-2.0 * x ** 2), np.exp(-4.0 * np.abs(x) + 2.0))
    return unnorm / _SPEED_NORM


def speed_cdf_regime2(x) -> np.ndarray:
    """Distribution function of :func:`speed_density_regime2` in closed form."""
    x = np.asarray(x, dtype=float)
    root = math.sqrt(math.pi / 8.0)

    def inner(u):
        return root * (erf(math.sqrt(2.0) * u) - erf(-math.sqrt(2.0)))

    tail = math.exp(-2.0) / 4.0
    left = np.exp(4.0 * x + 2.0) / 4.0
    mid = tail + inner(np.clip(x, -1.0, 1.0))
    right = tail + inner(1.0) + (math.exp(-2.0) - np.exp(-4.0 * x + 2.0)) / 4.0
    out = np.where(x < -1.0, left, np.where(x <= 1.0, mid, right))
    return out / _SPEED_NORM


_SPEED_NORM = math.sqrt(math.pi / 2.0) * math.erf(math.sqrt(2.0)) + math.exp(-2.0) / 2.0
