"""System definitions and evaluation of the hybrid generator.

All user-supplied callables are *batched*: spatial arguments carry a leading
batch axis (shape ``(m, d)``) while the regime is a plain integer, so one call
evaluates many points that share a regime. A single point is a batch of one.

Callable conventions (``d`` is the spatial dimension):

* ``grad_potential(x, k) -> (m, d)``
* ``potential(x, k) -> (m,)``
* ``damping(x, y, k) -> (m, d, d)`` (anything broadcastable to it)
* ``noise(x, y, k) -> (m, d, d)`` (anything broadcastable to it)
* ``q_row(k, x, y) -> [(l, rate), ...]`` with ``rate`` broadcastable to ``(m,)``
* ``qhat_row(k) -> [(l, rate), ...]`` with scalar rates

Overdamped systems (first-order dynamics ``dX = -grad V dt + sigma dW``) use
the same type with ``overdamped=True``; their velocity block has width zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, DominationError, InvariantViolation

_RATE_TOL = 1e-12


@dataclass(frozen=True)
class DominatingRow:
    targets: np.ndarray
    rates: np.ndarray
    total: float
    cumulative: np.ndarray

    def rate_of(self, target) -> np.ndarray:
        """Dominating rate towards ``target`` (vectorized; 0 outside support)."""
        target = np.asarray(target)
        out = np.zeros(target.shape)
        for l, r in zip(self.targets, self.rates):
            out[target == l] = r
        return out


@dataclass(frozen=True, eq=False)
class SystemSpec:
    dim: int
    grad_potential: Callable
    damping: Callable
    noise: Callable
    q_row: Callable
    qhat_row: Callable
    H_bound: float
    potential: Callable | None = None
    overdamped: bool = False
    regimes: tuple[int, ...] | None = None
    name: str = "custom"
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigurationError(f"dim must be a positive integer, got {self.dim!r}")
        if not self.H_bound > 0:
            raise ConfigurationError(f"H_bound must be positive, got {self.H_bound!r}")
        object.__setattr__(self, "_rows", {})
        if self.regimes is not None:
            regimes = tuple(int(k) for k in self.regimes)
            if not regimes or min(regimes) < 1:
                raise ConfigurationError("regimes are positive integers")
            object.__setattr__(self, "regimes", regimes)
            for k in regimes:
                self.dominating(k)

    @property
    def y_dim(self) -> int:
        return 0 if self.overdamped else self.dim

    @property
    def phase_dim(self) -> int:
        return self.dim + self.y_dim

    def dominating(self, k: int) -> DominatingRow:
        """Cached dominating row for regime ``k``; checks the bound on its total."""
        k = int(k)
        rows = self._rows
        if k not in rows:
            pairs = [(int(l), float(r)) for l, r in self.qhat_row(k)]
            for l, r in pairs:
                if l == k:
                    raise ConfigurationError(f"dominating row of regime {k} targets itself")
                if not r > 0:
                    raise ConfigurationError(f"dominating rate {k}->{l} must be positive, got {r}")
            targets = np.array([l for l, _ in pairs], dtype=np.int64)
            rates = np.array([r for _, r in pairs], dtype=float)
            total = float(rates.sum())
            if total > self.H_bound * (1 + _RATE_TOL):
                raise InvariantViolation(
                    f"dominating rates of regime {k} sum to {total} > H_bound={self.H_bound}"
                )
            with np.errstate(invalid="ignore"):
                cumulative = np.cumsum(rates) / total if total > 0 else rates
            rows[k] = DominatingRow(targets, rates, total, cumulative)
        return rows[k]

    def rates(self, k: int, x, y, validate: bool = True) -> list[tuple[int, np.ndarray]]:
        """Off-diagonal switching rates out of ``k`` at a batch of phase points."""
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        out = []
        row = self.dominating(k) if validate else None
        for l, rate in self.q_row(k, x, y):
            l = int(l)
            rate = np.broadcast_to(np.asarray(rate, dtype=float), batch)
            if validate:
                bound = row.rate_of(l)
                if bound == 0:
                    raise DominationError(f"rate {k}->{l} lies outside the dominating support")
                if np.any(rate < 0):
                    raise DominationError(f"negative switching rate {k}->{l}")
                if np.any(rate > bound * (1 + _RATE_TOL)):
                    raise DominationError(
                        f"switching rate {k}->{l} reaches {rate.max()} > dominating {float(bound)}"
                    )
            out.append((l, rate))
        return out

    def total_rate(self, k: int, x, y, validate: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape[:-1])
        for _, rate in self.rates(k, x, y, validate=validate):
            total = total + rate
        return total

    def frozen(self, k: int) -> "SystemSpec":
        """The same dynamics with the regime frozen at ``k`` and switching switched off."""
        k = int(k)
        return SystemSpec(
            dim=self.dim,
            grad_potential=self.grad_potential,
            damping=self.damping,
            noise=self.noise,
            q_row=_no_switching,
            qhat_row=_no_dominating,
            H_bound=self.H_bound,
            potential=self.potential,
            overdamped=self.overdamped,
            regimes=(k,),
            name=f"{self.name}[frozen {k}]",
            params=dict(self.params),
        )


def _no_switching(k, x, y):
    return []


def _no_dominating(k):
    return []


@dataclass(frozen=True)
class HybridState:
    x: np.ndarray
    y: np.ndarray
    k: int

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float)) if np.size(self.y) else np.zeros(0)
        if x.ndim != 1 or y.ndim != 1:
            raise ConfigurationError("state coordinates must be flat vectors")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ConfigurationError("state coordinates must be finite")
        if int(self.k) != self.k or self.k < 1:
            raise ConfigurationError(f"regime must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "k", int(self.k))

    @classmethod
    def of(cls, spec: SystemSpec, x, y=None, k: int = 1) -> "HybridState":
        x = np.broadcast_to(np.asarray(x, dtype=float), (spec.dim,))
        if spec.overdamped:
            y = np.zeros(0)
        else:
            y = np.zeros(spec.dim) if y is None else np.broadcast_to(np.asarray(y, float), (spec.dim,))
        return cls(x.copy(), np.array(y, dtype=float), k)

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])


@dataclass(frozen=True)
class TestFunction:
    """A smooth test function with user-supplied derivatives.

    ``hess_x`` is only needed for overdamped systems, ``grad_y``/``hess_y``
    only for second-order ones. ``regime_support`` lists the regimes where the
    function may depend on ``k``; outside it the value is constant in ``k``.
    """

    __test__ = False

    value: Callable
    grad_x: Callable
    grad_y: Callable | None = None
    hess_y: Callable | None = None
    hess_x: Callable | None = None
    regime_support: frozenset | None = None
    name: str = ""

    @classmethod
    def constant(cls, c: float = 1.0) -> "TestFunction":
        def value(x, y, k):
            return np.full(np.shape(x)[:-1], float(c))

        def grad(x, y, k):
            return np.zeros_like(np.asarray(x, dtype=float))

        def grad_y(x, y, k):
            return np.zeros_like(np.asarray(y, dtype=float))

        def hess(x, y, k):
            x = np.asarray(x, dtype=float)
            return np.zeros(x.shape + x.shape[-1:])

        def hess_y(x, y, k):
            y = np.asarray(y, dtype=float)
            return np.zeros(y.shape + y.shape[-1:])

        return cls(value, grad, grad_y, hess_y, hess, frozenset(), name=f"const({c})")

    @classmethod
    def finite_difference(cls, value: Callable, step: float | None = None,
                          regime_support=None, name: str = "") -> "TestFunction":
        """Derivatives by central differences.

        The default step is ``eps**(1/3) * max(1, |coordinate|)``; a fixed
        ``step`` overrides it.
        """
        def h_for(z):
            if step is not None:
                return np.full(z.shape, float(step))
            return np.finfo(float).eps ** (1 / 3) * np.maximum(1.0, np.abs(z))

        def grad_in(which):
            def grad(x, y, k):
                x = np.asarray(x, dtype=float)
                y = np.asarray(y, dtype=float)
                z = x if which == 0 else y
                h = h_for(z)
                out = np.zeros(z.shape)
                for i in range(z.shape[-1]):
                    e = np.zeros(z.shape)
                    e[..., i] = h[..., i]
                    args_p = (x + e, y) if which == 0 else (x, y + e)
                    args_m = (x - e, y) if which == 0 else (x, y - e)
                    out[..., i] = (value(*args_p, k) - value(*args_m, k)) / (2 * h[..., i])
                return out
            return grad

        def hess_in(which):
            def hess(x, y, k):
                x = np.asarray(x, dtype=float)
                y = np.asarray(y, dtype=float)
                z = x if which == 0 else y
                n = z.shape[-1]
                h = h_for(z)
                out = np.zeros(z.shape + (n,))

                def f(dz):
                    return value(x + dz, y, k) if which == 0 else value(x, y + dz, k)

                f0 = f(0.0)
                for i in range(n):
                    ei = np.zeros(z.shape)
                    ei[..., i] = h[..., i]
                    out[..., i, i] = (f(ei) - 2 * f0 + f(-ei)) / h[..., i] ** 2
                    for j in range(i + 1, n):
                        ej = np.zeros(z.shape)
                        ej[..., j] = h[..., j]
                        v = (f(ei + ej) - f(ei - ej) - f(-ei + ej) + f(-ei - ej)) / (
                            4 * h[..., i] * h[..., j]
                        )
                        out[..., i, j] = out[..., j, i] = v
                return out
            return hess

        return cls(value, grad_in(0), grad_in(1), hess_in(1), hess_in(0),
                   regime_support, name=name or "finite-difference")


def check_derivatives(f: TestFunction, spec: SystemSpec, rng: np.random.Generator,
                      n_points: int = 32, scale: float = 2.0, regimes: Sequence[int] = (1,),
                      rtol: float = 1e-4) -> bool:
    """Compare supplied first derivatives against central differences at random points."""
    fd = TestFunction.finite_difference(f.value)
    for k in regimes:
        x = rng.uniform(-scale, scale, (n_points, spec.dim))
        y = rng.uniform(-scale, scale, (n_points, spec.y_dim))
        pairs = [(f.grad_x, fd.grad_x)]
        if not spec.overdamped:
            pairs.append((f.grad_y, fd.grad_y))
        for exact, approx in pairs:
            a, b = exact(x, y, k), approx(x, y, k)
            if not np.allclose(a, b, rtol=rtol, atol=rtol * (1 + np.abs(b).max())):
                return False
    return True


def _matrix(value, batch, d) -> np.ndarray:
    return np.broadcast_to(np.asarray(value, dtype=float), batch + (d, d))


def _vector(value, batch, d, what) -> np.ndarray:
    value = np.asarray(value, dtype=float)
    try:
        return np.broadcast_to(value, batch + (d,))
    except ValueError:
        raise ConfigurationError(f"{what} has shape {value.shape}, expected {batch + (d,)}") from None


def check_noise(sigma: np.ndarray) -> None:
    """Symmetric positive-definite check by attempting a Cholesky factorization."""
    if not np.allclose(sigma, np.swapaxes(sigma, -1, -2), rtol=1e-10, atol=1e-12):
        raise InvariantViolation("noise matrix is not symmetric")
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise InvariantViolation("noise matrix is not positive definite") from None


def lk_batch(spec: SystemSpec, f: TestFunction, x, y, k: int, validate: bool = True) -> np.ndarray:
    """Diffusion part of the generator for a fixed regime at a batch of points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    batch, d = x.shape[:-1], spec.dim
    if x.shape[-1] != d or y.shape[-1] != spec.y_dim:
        raise ConfigurationError(f"state shapes {x.shape}, {y.shape} do not match dim={d}")
    sigma = _matrix(spec.noise(x, y, k), batch, d)
    if validate:
        check_noise(sigma)
    a = sigma @ np.swapaxes(sigma, -1, -2)
    gradV = _vector(spec.grad_potential(x, k), batch, d, "grad_potential")
    gx = _vector(f.grad_x(x, y, k), batch, d, "grad_x")
    if spec.overdamped:
        hx = _matrix(f.hess_x(x, y, k), batch, d)
        return 0.5 * np.einsum("...ij,...ji->...", a, hx) - np.sum(gradV * gx, axis=-1)
    gy = _vector(f.grad_y(x, y, k), batch, d, "grad_y")
    hy = _matrix(f.hess_y(x, y, k), batch, d)
    c = _matrix(spec.damping(x, y, k), batch, d)
    drift = np.einsum("...ij,...j->...i", c, y) + gradV
    return (0.5 * np.einsum("...ij,...ji->...", a, hy)
            + np.sum(y * gx, axis=-1) - np.sum(drift * gy, axis=-1))


def q_batch(spec: SystemSpec, f: TestFunction, x, y, k: int, validate: bool = True) -> np.ndarray:
    """Switching part of the generator for a fixed regime at a batch of points."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1])
    support = f.regime_support
    fk = None
    for l, rate in spec.rates(k, x, y, validate=validate):
        if support is not None and k not in support and l not in support:
            continue
        if fk is None:
            fk = np.asarray(f.value(x, y, k), dtype=float)
        out = out + rate * (np.asarray(f.value(x, y, l), dtype=float) - fk)
    return out


def generator_batch(spec: SystemSpec, f: TestFunction, x, y, k: int,
                    validate: bool = True) -> np.ndarray:
    return lk_batch(spec, f, x, y, k, validate) + q_batch(spec, f, x, y, k, validate)


def _point(s: HybridState):
    return s.x[None, :], s.y[None, :]


def eval_Lk(spec: SystemSpec, f: TestFunction, s: HybridState, validate: bool = True) -> float:
    x, y = _point(s)
    return float(lk_batch(spec, f, x, y, s.k, validate)[0])


def eval_Q(spec: SystemSpec, f: TestFunction, s: HybridState, validate: bool = True) -> float:
    x, y = _point(s)
    return float(q_batch(spec, f, x, y, s.k, validate)[0])


def eval_generator(spec: SystemSpec, f: TestFunction, s: HybridState,
                   validate: bool = True) -> float:
    return eval_Lk(spec, f, s, validate) + eval_Q(spec, f, s, validate)


@dataclass
class AuditReport:
    n_checked: int
    max_ratio: float
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def audit_domination(spec: SystemSpec, rng: np.random.Generator, n_samples: int = 10_000,
                     scale: float = 10.0, regimes: Sequence[int] | None = None,
                     check_noise_pd: bool = True) -> AuditReport:
    """Sample random states and check ``q_kl(z) <= qhat_kl`` plus noise definiteness."""
    regimes = tuple(regimes or spec.regimes or (1,))
    x = rng.uniform(-scale, scale, (n_samples, spec.dim))
    y = rng.uniform(-scale, scale, (n_samples, spec.y_dim))
    ks = rng.choice(regimes, size=n_samples)
    report = AuditReport(0, 0.0)
    for k in regimes:
        m = ks == k
        if not m.any():
            continue
        xm, ym = x[m], y[m]
        row = spec.dominating(k)
        for l, rate in spec.rates(k, xm, ym, validate=False):
            bound = float(row.rate_of(l))
            if bound == 0:
                report.violations.append((k, l, "outside dominating support"))
                continue
            ratio = rate / bound
            report.max_ratio = max(report.max_ratio, float(ratio.max(initial=0.0)))
            bad = (ratio > 1 + _RATE_TOL) | (rate < 0)
            for i in np.flatnonzero(bad)[:10]:
                report.violations.append((k, l, xm[i].tolist(), ym[i].tolist(), float(rate[i])))
        if check_noise_pd:
            sigma = _matrix(spec.noise(xm, ym, k), xm.shape[:-1], spec.dim)
            try:
                check_noise(sigma)
            except InvariantViolation as exc:
                report.violations.append((k, "noise", str(exc)))
        report.n_checked += int(m.sum())
    return report


def _sq(z):
    return np.sum(z * z, axis=-1)


def _outer(z):
    return z[..., :, None] * z[..., None, :]


def _eye_like(z):
    return np.broadcast_to(np.eye(z.shape[-1]), z.shape + z.shape[-1:])


def builtin_test_functions() -> dict[str, TestFunction]:
    """Three bounded smooth test functions with analytic derivatives."""

    def bump(x, y, k):
        return np.exp(-0.5 * (_sq(x) + _sq(y)))

    def regime_bump(x, y, k):
        return k * np.exp(-0.25 * (_sq(x) + _sq(y)))

    def _cy(y):
        return np.cos(y[..., 0]) if y.shape[-1] else np.ones(y.shape[:-1])

    def _sy(y):
        return np.sin(y[..., 0]) if y.shape[-1] else np.zeros(y.shape[:-1])

    def _e1(z, coeff):
        out = np.zeros(z.shape)
        if z.shape[-1]:
            out[..., 0] = coeff
        return out

    def _e11(z, coeff):
        out = np.zeros(z.shape + z.shape[-1:])
        if z.shape[-1]:
            out[..., 0, 0] = coeff
        return out

    def trig(x, y, k):
        return np.sin(x[..., 0]) * _cy(y) + 0.5 * k

    funcs = {
        "bump": TestFunction(
            bump,
            grad_x=lambda x, y, k: -x * bump(x, y, k)[..., None],
            grad_y=lambda x, y, k: -y * bump(x, y, k)[..., None],
            hess_y=lambda x, y, k: (_outer(y) - _eye_like(y)) * bump(x, y, k)[..., None, None],
            hess_x=lambda x, y, k: (_outer(x) - _eye_like(x)) * bump(x, y, k)[..., None, None],
            regime_support=frozenset(),
            name="bump",
        ),
        "regime-bump": TestFunction(
            regime_bump,
            grad_x=lambda x, y, k: -0.5 * x * regime_bump(x, y, k)[..., None],
            grad_y=lambda x, y, k: -0.5 * y * regime_bump(x, y, k)[..., None],
            hess_y=lambda x, y, k: (0.25 * _outer(y) - 0.5 * _eye_like(y))
            * regime_bump(x, y, k)[..., None, None],
            hess_x=lambda x, y, k: (0.25 * _outer(x) - 0.5 * _eye_like(x))
            * regime_bump(x, y, k)[..., None, None],
            name="regime-bump",
        ),
        "trig": TestFunction(
            trig,
            grad_x=lambda x, y, k: _e1(x, np.cos(x[..., 0]) * _cy(y)),
            grad_y=lambda x, y, k: _e1(y, -np.sin(x[..., 0]) * _sy(y)),
            hess_y=lambda x, y, k: _e11(y, -np.sin(x[..., 0]) * _cy(y)),
            hess_x=lambda x, y, k: _e11(x, -np.sin(x[..., 0]) * _cy(y)),
            name="trig",
        ),
    }
    return funcs
