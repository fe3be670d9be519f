"""Grid-based drift checks for Lyapunov candidates and the sufficient-condition suite.

Nothing here proves a limit. Limits and suprema over unbounded sets are
replaced by values on a user-supplied radius schedule, and every outcome is
one of ``pass``, ``fail`` or ``inconclusive``; all per-point values are kept
so a report can be re-checked against :func:`hamswitch.model.generator_batch`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, NormalizationError
from .model import SystemSpec, TestFunction, _matrix, generator_batch, lk_batch

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


@dataclass(frozen=True)
class Profile:
    """A function of position with its gradient and Hessian, all batched over ``(m, d)``."""
    value: Callable
    grad: Callable
    hess: Callable | None = None


def power_profile(p: float, scale: float = 1.0) -> Profile:
    """``scale * |x|**p`` (``p >= 2`` keeps it twice differentiable)."""
    def value(x):
        return scale * np.sum(x * x, axis=-1) ** (p / 2)

    def grad(x):
        r2 = np.sum(x * x, axis=-1)[..., None]
        return scale * p * r2 ** (p / 2 - 1) * x

    def hess(x):
        d = x.shape[-1]
        r2 = np.sum(x * x, axis=-1)[..., None, None]
        outer = x[..., :, None] * x[..., None, :]
        return scale * p * (r2 ** (p / 2 - 1) * np.eye(d)
                            + (p - 2) * r2 ** (p / 2 - 2) * outer)

    return Profile(value, grad, hess)


# ----------------------------------------------------------------------------- candidates


@dataclass
class LyapunovCandidate:
    """A drift candidate ``W``.

    With ``log_form=False`` the test function is ``W`` itself. With
    ``log_form=True`` it is the exponent ``F`` and ``W = exp(F - shift)``; the
    ratio ``AW/W`` is then computed without ever forming ``W``.
    """
    function: TestFunction
    description: str = ""
    log_form: bool = False
    shift: float = 0.0

    def value(self, x, y, k) -> np.ndarray:
        v = np.asarray(self.function.value(x, y, k), dtype=float)
        if self.log_form:
            with np.errstate(over="ignore"):
                return np.exp(v - self.shift)
        return v

    def log_value(self, x, y, k) -> np.ndarray:
        v = np.asarray(self.function.value(x, y, k), dtype=float)
        return v - self.shift if self.log_form else np.log(v)

    def ratio(self, spec: SystemSpec, x, y, k: int) -> np.ndarray:
        """``AW / W`` at a batch of points of regime ``k``."""
        if not self.log_form:
            return generator_batch(spec, self.function, x, y, k) / self.value(x, y, k)
        f = self.function
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        batch = x.shape[:-1]
        sigma = _matrix(spec.noise(x, y, k), batch, spec.dim)
        grad = f.grad_x(x, y, k) if spec.overdamped else f.grad_y(x, y, k)
        sg = np.einsum("...ji,...j->...i", sigma, np.asarray(grad, dtype=float))
        out = lk_batch(spec, f, x, y, k) + 0.5 * np.sum(sg * sg, axis=-1)
        fk = np.asarray(f.value(x, y, k), dtype=float)
        for l, rate in spec.rates(k, x, y):
            diff = np.asarray(f.value(x, y, l), dtype=float) - fk
            with np.errstate(divide="ignore", over="ignore"):
                # rate * (exp(diff) - 1) with the exponential taken in log space
                grow = np.exp(np.log(rate) + diff)
            out = out + np.where(rate > 0, grow - rate, 0.0)
        return out

    def generator(self, spec: SystemSpec, x, y, k: int) -> np.ndarray:
        if not self.log_form:
            return generator_batch(spec, self.function, x, y, k)
        with np.errstate(over="ignore", invalid="ignore"):
            return self.value(x, y, k) * self.ratio(spec, x, y, k)


def constant_candidate(c: float = 1.0) -> LyapunovCandidate:
    return LyapunovCandidate(TestFunction.constant(c), description=f"constant {c}")


def hamiltonian_candidate(spec: SystemSpec, U: Profile, u: dict, phi: Callable[[int], float],
                          c_ellipticity: float, x_box: tuple[float, float] = (-10.0, 10.0),
                          regimes: Sequence[int] | None = None, n_grid: int = 2001,
                          ) -> LyapunovCandidate:
    """``V(x,k) + |y|^2/2 + a<x,y> + a u_k U(x) + phi(k) + 1 - inf``, ``a = (c ^ 1) / 4``.

    The infimum over ``y`` is taken exactly (at ``y = -a x``); the infimum over
    ``x`` is the minimum over ``n_grid`` points per axis of ``x_box`` (on the
    diagonal for ``d > 1``), lowered by a 1% margin.
    """
    if spec.potential is None:
        raise ConfigurationError("the Hamiltonian candidate needs spec.potential")
    if spec.overdamped:
        raise ConfigurationError("the Hamiltonian candidate is for second-order systems")
    regimes = tuple(regimes or spec.regimes or (1,))
    a = min(c_ellipticity, 1.0) / 4.0
    d = spec.dim
    xs = np.linspace(x_box[0], x_box[1], n_grid)[:, None] * np.ones(d)
    lows = []
    for k in regimes:
        reduced = (np.asarray(spec.potential(xs, k), dtype=float) + a * u[k] * U.value(xs)
                   - 0.5 * a * a * np.sum(xs * xs, axis=-1))
        lows.append(float(reduced.min()))
    low = min(lows)
    inf_approx = low - 0.01 * max(abs(low), 1.0)

    def value(x, y, k):
        return (np.asarray(spec.potential(x, k), dtype=float) + 0.5 * np.sum(y * y, axis=-1)
                + a * np.sum(x * y, axis=-1) + a * u[k] * U.value(x) + phi(k) + 1.0 - inf_approx)

    def grad_x(x, y, k):
        return np.asarray(spec.grad_potential(x, k), dtype=float) + a * y + a * u[k] * U.grad(x)

    def grad_y(x, y, k):
        return y + a * x

    def hess_y(x, y, k):
        return np.broadcast_to(np.eye(d), np.shape(y) + (d,))

    f = TestFunction(value, grad_x, grad_y, hess_y, name="hamiltonian")
    cand = LyapunovCandidate(f, description=f"Hamiltonian candidate, a={a:g}")
    cand.a = a
    cand.inf_approx = inf_approx
    return cand


# --- smooth-ish pieces of the exponential candidate for the van der Pol system


def sign_blend(x):
    """``sgn(x)`` for ``|x| >= 1``, the odd quintic ``(15x - 10x^3 + 3x^5)/8`` inside (C^2)."""
    x = np.asarray(x, dtype=float)
    inner = (15.0 * x - 10.0 * x ** 3 + 3.0 * x ** 5) / 8.0
    return np.where(np.abs(x) < 1.0, inner, np.sign(x))


def sign_blend_prime(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < 1.0, 15.0 / 8.0 * (1.0 - x * x) ** 2, 0.0)


SIGN_BLEND_SLOPE = 15.0 / 8.0


def cubic_well(x, alpha_k):
    """``alpha_k (|x|^3/3 - |x|)`` outside ``[-1, 1]``, a matching quartic inside (C^2)."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    return alpha_k * np.where(ax > 1.0, ax ** 3 / 3.0 - ax, -5.0 / 12.0 - x * x / 2.0 + x ** 4 / 4.0)


def cubic_well_prime(x, alpha_k):
    x = np.asarray(x, dtype=float)
    return alpha_k * np.where(np.abs(x) > 1.0, np.sign(x) * (x * x - 1.0), x ** 3 - x)


@dataclass(frozen=True)
class PlateauRamp:
    """Compactly supported odd ``W`` whose slope is ``-depth`` on ``[-c, c]`` and ``eps`` beyond.

    The outer ramps have length ``depth * c / eps`` so ``W`` returns to 0.
    """
    depth: float
    eps: float
    core: float = math.sqrt(2.0)

    @property
    def support(self) -> float:
        return self.core + self.depth * self.core / self.eps

    def value(self, x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        outer = -np.sign(x) * np.maximum(self.depth * self.core - self.eps * (ax - self.core), 0.0)
        return np.where(ax <= self.core, -self.depth * x, outer)

    def slope(self, x):
        ax = np.abs(np.asarray(x, dtype=float))
        return np.where(ax <= self.core, -self.depth, np.where(ax <= self.support, self.eps, 0.0))


def vanderpol_exponential_candidate(spec: SystemSpec, sigma_hat: float | None = None,
                                    a: float | None = None, b: float | None = None,
                                    ) -> LyapunovCandidate:
    """``exp(F)`` with ``F = a H + (b G(x) + W(x)) y + b U(x,k)`` for the van der Pol system.

    ``H = y^2/2 + beta_k x^2/2``; ``G``, ``U`` and ``W`` are :func:`sign_blend`,
    :func:`cubic_well` and a :class:`PlateauRamp`. Defaults: ``a = 1/(4 sigma^2)`` and
    ``b`` at 90% of its slope limit ``(a - sigma^2 a^2) / (4 sup|G'|)``; the ramp depth is
    chosen so ``b G' + W' <= -2a - sigma^2 a^2`` on the core.

    Smaller ``a / b`` keeps the cross-regime factor ``exp(a x^2/2 - b |x|^3/3)`` of
    regime 2 moderate; with ``a = 1/2`` it peaks near ``e^52`` and the ratio only
    turns negative far beyond practical radii.
    """
    alpha = dict(zip((1, 2), spec.params.get("alpha", (1.0, 2.0))))
    beta = dict(zip((1, 2), spec.params.get("beta", (2.0, 1.0))))
    s2 = float(spec.params.get("sigma", 1.0) if sigma_hat is None else sigma_hat) ** 2
    a = 0.25 / s2 if a is None else float(a)
    gap = a - s2 * a * a
    b = 0.9 * gap / (4 * SIGN_BLEND_SLOPE) if b is None else float(b)
    if not (0 < a < 1 / s2):
        raise ConfigurationError("a must lie in (0, 1/sigma^2)")
    if not b * SIGN_BLEND_SLOPE < gap / 4:
        raise ConfigurationError("b is too large for the slope condition")
    depth = 2 * a + s2 * a * a + b * SIGN_BLEND_SLOPE
    ramp = PlateauRamp(depth=depth, eps=gap / 4)

    def value(x, y, k):
        xs, ys = x[..., 0], y[..., 0]
        return (a * (0.5 * ys ** 2 + 0.5 * beta[k] * xs ** 2)
                + (b * sign_blend(xs) + ramp.value(xs)) * ys + b * cubic_well(xs, alpha[k]))

    def grad_x(x, y, k):
        xs, ys = x[..., 0], y[..., 0]
        g = (a * beta[k] * xs + (b * sign_blend_prime(xs) + ramp.slope(xs)) * ys
             + b * cubic_well_prime(xs, alpha[k]))
        return g[..., None]

    def grad_y(x, y, k):
        xs, ys = x[..., 0], y[..., 0]
        return (a * ys + b * sign_blend(xs) + ramp.value(xs))[..., None]

    def hess_y(x, y, k):
        return np.full(np.shape(y)[:-1] + (1, 1), a)

    f = TestFunction(value, grad_x, grad_y, hess_y, name="vanderpol-exponent")
    cand = LyapunovCandidate(f, description=f"exp(F), a={a:g}, b={b:g}", log_form=True)
    cand.ramp = ramp
    return cand


# ----------------------------------------------------------------------------- drift check


@dataclass(frozen=True)
class DriftGrid:
    """Tensor grid over a box in phase space times a regime window."""
    lo: tuple
    hi: tuple
    n: int | tuple = 81
    regimes: tuple = (1,)
    shell: float = 0.8

    def points(self, spec: SystemSpec) -> np.ndarray:
        dims = spec.phase_dim
        lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (dims,))
        hi = np.broadcast_to(np.asarray(self.hi, dtype=float), (dims,))
        n = np.broadcast_to(np.asarray(self.n, dtype=int), (dims,))
        axes = [np.linspace(lo[i], hi[i], n[i]) for i in range(dims)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def shell_mask(self, spec: SystemSpec, z: np.ndarray) -> np.ndarray:
        dims = spec.phase_dim
        lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (dims,))
        hi = np.broadcast_to(np.asarray(self.hi, dtype=float), (dims,))
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        return np.max(np.abs(z - mid) / half, axis=1) >= self.shell

    def describe(self) -> str:
        return (f"box {list(self.lo)}..{list(self.hi)}, n={self.n}, regimes={list(self.regimes)}, "
                f"shell>={self.shell}")


@dataclass
class DriftReport:
    grid: str
    alpha: float
    beta: float
    violations: list = field(default_factory=list)
    window_limited: bool = True
    points: np.ndarray | None = None
    regimes: np.ndarray | None = None
    generator: np.ndarray | None = None
    values: np.ndarray | None = None

    @property
    def passed(self) -> bool:
        return not self.violations and self.alpha > 0

    def rows(self):
        """``(point, value, bound, margin)`` per grid point."""
        bound = -self.alpha * self.values + self.beta
        for i in range(self.values.size):
            yield (tuple(self.points[i]) + (int(self.regimes[i]),), float(self.generator[i]),
                   float(bound[i]), float(bound[i] - self.generator[i]))


def _evaluate(spec, candidate, grid):
    z = grid.points(spec)
    d = spec.dim
    gens, vals, ks, zs = [], [], [], []
    for k in grid.regimes:
        x, y = z[:, :d], z[:, d:]
        vals.append(candidate.value(x, y, k))
        gens.append(candidate.generator(spec, x, y, k))
        ks.append(np.full(z.shape[0], k))
        zs.append(z)
    return np.concatenate(zs), np.concatenate(ks), np.concatenate(gens), np.concatenate(vals)


def normalize_on_grid(spec: SystemSpec, candidate: LyapunovCandidate,
                      grid: DriftGrid) -> LyapunovCandidate:
    """Shift a log-form candidate so that ``W >= 1`` on every grid point."""
    if not candidate.log_form:
        raise ConfigurationError("only log-form candidates can be shifted")
    z = grid.points(spec)
    x, y = z[:, :spec.dim], z[:, spec.dim:]
    low = min(float(np.min(candidate.function.value(x, y, k))) for k in grid.regimes)
    candidate.shift = min(low, 0.0)
    return candidate


def verify_drift(spec: SystemSpec, candidate: LyapunovCandidate, grid: DriftGrid,
                 alpha: float | None = None, beta: float | None = None,
                 alphas: Sequence[float] | None = None) -> DriftReport:
    """Check ``AW <= -alpha W + beta`` on a grid.

    With both constants given the inequality is checked pointwise. Otherwise
    ``alpha`` is feasible when the maximum of ``AW + alpha W`` over the outer
    shell of the box does not exceed its maximum over the interior, i.e. the
    constant ``beta`` is set by a compact core and not by the boundary of the
    grid. ``alpha*`` is the largest feasible value of a descending sweep,
    refined by bisection, and ``beta* = max (AW + alpha* W)``. The criterion
    is invariant under adding a constant to ``W``.
    """
    z, ks, gen, val = _evaluate(spec, candidate, grid)
    if np.any(val < 1 - 1e-12):
        i = int(np.argmin(val))
        raise NormalizationError(f"candidate value {val[i]:.6g} < 1 at {z[i].tolist()}, k={ks[i]}")
    report = DriftReport(grid.describe(), 0.0, 0.0, points=z, regimes=ks, generator=gen,
                         values=val)
    if alpha is not None and beta is not None:
        bad = gen > -alpha * val + beta
        report.alpha, report.beta = float(alpha), float(beta)
        report.violations = [(tuple(z[i]), int(ks[i]), float(gen[i])) for i in np.flatnonzero(bad)]
        return report
    shell = grid.shell_mask(spec, z)
    core = ~shell

    def slack(a):
        with np.errstate(invalid="ignore", over="ignore"):
            s = gen + a * val
        return np.nanmax(s[shell]) - np.nanmax(s[core])

    if alpha is not None:
        feasible = slack(alpha) <= 0
        best = float(alpha) if feasible else 0.0
    else:
        sweep = np.geomspace(10.0, 1e-4, 161) if alphas is None else np.asarray(alphas)
        best = 0.0
        for i, a in enumerate(sweep):
            if slack(a) <= 0:
                best = float(a)
                upper = float(sweep[i - 1]) if i > 0 else None
                if upper is not None:
                    lo, hi = best, upper
                    for _ in range(40):
                        mid = 0.5 * (lo + hi)
                        lo, hi = (mid, hi) if slack(mid) <= 0 else (lo, mid)
                    best = lo
                break
    report.alpha = best
    with np.errstate(invalid="ignore", over="ignore"):
        s = gen + max(best, 1e-4 if alpha is None else float(alpha)) * val
    report.beta = float(np.nanmax(s)) if beta is None else float(beta)
    if best <= 0:
        worst = np.flatnonzero(shell & (s > np.nanmax(s[core])))
        report.violations = [(tuple(z[i]), int(ks[i]), float(gen[i])) for i in worst[:100]]
    elif beta is not None:
        bad = gen > -best * val + beta
        report.violations = [(tuple(z[i]), int(ks[i]), float(gen[i])) for i in np.flatnonzero(bad)]
    return report


# ----------------------------------------------------------------------------- spheres and trends


def position_sphere(d: int, r: float, n: int = 64) -> np.ndarray:
    """Points with ``|x| = r`` (both points for ``d = 1``)."""
    if d == 1:
        return np.array([[r], [-r]])
    dirs = np.random.default_rng(12345).standard_normal((n, d))
    dirs = np.concatenate([np.eye(d), -np.eye(d), dirs])
    return r * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def phase_sphere(d: int, r: float, n: int = 101) -> tuple[np.ndarray, np.ndarray]:
    """Points with ``|x| + |y| = r``, split over ``n`` ratios and all sign/direction pairs."""
    t = np.linspace(0.0, r, n)
    ux = position_sphere(d, 1.0, 16)
    uy = position_sphere(d, 1.0, 16)
    xs, ys = [], []
    for a in ux:
        for b in uy:
            xs.append(t[:, None] * a)
            ys.append((r - t)[:, None] * b)
    return np.concatenate(xs), np.concatenate(ys)


@dataclass
class ConditionResult:
    name: str
    status: str
    radii: list
    values: list
    worst_margin: float
    note: str = ""
    window_limited: bool = False

    @property
    def passed(self) -> bool:
        return self.status == PASS


def _tail_monotone(values, increasing: bool, n_tail: int = 3) -> bool:
    tail = np.asarray(values[-n_tail:], dtype=float)
    steps = np.diff(tail)
    return bool(np.all(steps > 0)) if increasing else bool(np.all(steps < 0))


def _limit_sign(name, radii, values, want_negative: bool, note="", window_limited=False):
    """Status for "the limit of ``values`` is < 0" (or ``>= 0``)."""
    v = np.asarray(values, dtype=float)
    last = v[-1]
    if want_negative:
        ok_tail = bool(np.all(v[-3:] < 0))
        steps = np.diff(v[-3:])
        if ok_tail and np.all(steps <= 1e-12 * max(1.0, abs(last))):
            status = PASS
        elif ok_tail and abs(steps[-1]) < abs(steps[0]):
            # increments shrink: extrapolate the geometric tail of the remaining rise
            rho = abs(steps[-1]) / abs(steps[0])
            status = PASS if last + abs(steps[-1]) * rho / (1 - rho) < 0 else INCONCLUSIVE
        elif not ok_tail and np.all(steps >= 0):
            status = FAIL
        else:
            status = INCONCLUSIVE
        margin = float(-last)
    else:
        tol = 1e-9 * max(1.0, float(np.max(np.abs(v))))
        ok_tail = np.all(v[-2:] >= -tol)
        if ok_tail:
            status = PASS
        elif len(v) < 3 or np.all(np.diff(v[-3:]) <= 0):
            status = FAIL
        else:
            status = INCONCLUSIVE
        margin = float(last)
    return ConditionResult(name, status, list(map(float, radii)), list(map(float, v)), margin,
                           note, window_limited)


# ----------------------------------------------------------------------------- hypothesis suite


@dataclass
class ErgodicityConditionSpec:
    U: Profile
    V_profile: Profile
    u: dict
    v: dict
    kappa: float
    R: float
    gamma: float
    beta1: float
    beta2: float
    phi: Callable[[int], float]
    C1: float
    C2: float
    c_ellipticity: float
    alpha: float
    regimes: tuple = (1, 2)

    def __post_init__(self):
        for name in ("kappa", "R", "beta1", "beta2", "C2", "c_ellipticity", "alpha"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.gamma < 0 or self.C1 < 0:
            raise ConfigurationError("gamma and C1 must be non-negative")
        for k in self.regimes:
            if not (self.u[k] > 0 and self.v[k] > 0):
                raise ConfigurationError("u_k and v_k must be positive")

    @property
    def a(self) -> float:
        return min(self.c_ellipticity, 1.0) / 4.0

    @property
    def alpha_limit(self) -> float:
        c, kappa = self.c_ellipticity, self.kappa
        return min(4 * c / (c + 4), min(2 * self.u[k] / (kappa + 2 * self.u[k])
                                            for k in self.regimes))


def _switch_sum(spec, k, x, y, weights):
    """``sum_j q_kj (w_j - w_k)``: the switching operator applied to a regime function."""
    out = np.zeros(x.shape[0])
    for l, rate in spec.rates(k, x, y):
        out = out + rate * (weights(l) - weights(k))
    return out


def check_theorem_conditions(spec: SystemSpec, cond: ErgodicityConditionSpec,
                             radii: Sequence[float], n_sphere: int = 101
                             ) -> list[ConditionResult]:
    """Evaluate each sufficient condition on spheres of the scheduled radii."""
    radii = [float(r) for r in radii]
    if len(radii) < 3 or np.any(np.diff(radii) <= 0):
        raise ConfigurationError("radius schedule needs at least 3 increasing entries")
    if spec.potential is None:
        raise ConfigurationError("condition checks need spec.potential")
    d, ks, a = spec.dim, cond.regimes, cond.a
    out = []

    # growth of U against |x|^2
    vals = [float(np.min(cond.kappa * cond.U.value(position_sphere(d, r))
                         - r * r)) for r in radii]
    out.append(_limit_sign("U-growth", radii, vals, want_negative=False))

    # gamma: sup |u_k grad U - c^T x| over |x| + |y| >= R, compared with the stated value
    sups = []
    for r in radii:
        x, y = phase_sphere(d, max(r, cond.R), n_sphere)
        worst = 0.0
        for k in ks:
            c = _matrix(spec.damping(x, y, k), x.shape[:-1], d)
            diff = cond.u[k] * cond.U.grad(x) - np.einsum("...ji,...j->...i", c, x)
            worst = max(worst, float(np.max(np.linalg.norm(diff, axis=1))))
        sups.append(worst)
    tol = 1e-9 * max(1.0, cond.gamma)
    if max(sups) <= cond.gamma + tol:
        status = PASS
    elif _tail_monotone(sups, increasing=True):
        status = FAIL
    else:
        status = FAIL if sups[-1] > cond.gamma + tol else INCONCLUSIVE
    out.append(ConditionResult("gamma-finite", status, radii, sups, cond.gamma - max(sups),
                               note=f"stated gamma={cond.gamma:g}, observed sup={max(sups):.6g}"
                               + (", growing with radius" if _tail_monotone(sups, True) else "")))

    # product form of the potential beyond R
    devs = []
    for r in radii:
        x = position_sphere(d, max(r, cond.R))
        devs.append(max(float(np.max(np.abs(np.asarray(spec.potential(x, k), dtype=float)
                                            - cond.v[k] * cond.V_profile.value(x))))
                        for k in ks))
    scale = max(1.0, max(float(np.max(np.abs(cond.V_profile.value(position_sphere(d, max(r, cond.R))))))
                         for r in radii))
    ok = max(devs) <= 1e-9 * scale
    out.append(ConditionResult("potential-product", PASS if ok else FAIL, radii, devs, -max(devs),
                               window_limited=True))

    # <x, grad V> >= beta1 U + beta2 V beyond R
    margins = []
    for r in radii:
        x = position_sphere(d, max(r, cond.R))
        m = (np.sum(x * cond.V_profile.grad(x), axis=1) - cond.beta1 * cond.U.value(x)
             - cond.beta2 * cond.V_profile.value(x))
        margins.append(float(m.min()))
    out.append(ConditionResult("radial-force", PASS if min(margins) >= -1e-9 else FAIL, radii,
                               margins, min(margins)))

    # regime function phi
    phi_margins = []
    for r in [0.0] + radii:
        x, y = phase_sphere(d, r, n_sphere) if r > 0 else (np.zeros((1, d)), np.zeros((1, d)))
        if spec.overdamped:
            y = np.zeros((x.shape[0], 0))
        worst = math.inf
        for k in ks:
            lhs = _switch_sum(spec, k, x, y, cond.phi)
            worst = min(worst, float(np.min(cond.C1 - cond.C2 * cond.phi(k) - lhs)))
        phi_margins.append(worst)
    phis = [cond.phi(k) for k in ks]
    increasing = all(p2 >= p1 for p1, p2 in zip(phis, phis[1:])) and min(phis) >= 0
    out.append(ConditionResult(
        "phi-drift", PASS if min(phi_margins) >= -1e-12 and increasing else FAIL,
        [0.0] + radii, phi_margins, min(phi_margins),
        note="unboundedness of phi checked on the regime window only", window_limited=True))

    # divergence of V + a u_k U - a^2 |x|^2
    div = []
    for r in radii:
        x = position_sphere(d, r)
        div.append(min(float(np.min(np.asarray(spec.potential(x, k), dtype=float)
                                    + a * cond.u[k] * cond.U.value(x) - a * a * r * r))
                       for k in ks))
    if _tail_monotone(div, increasing=True) and div[-1] > div[0]:
        status = PASS
    elif _tail_monotone(div, increasing=False):
        status = FAIL
    else:
        status = INCONCLUSIVE
    out.append(ConditionResult("H-divergence", status, radii, div, div[-1]))

    # the two switching limits
    for name, fn in (("switching-limit-v", lambda k, x, y: _switch_sum(spec, k, x, y, cond.v.get)
                      + (cond.alpha - a * cond.beta2) * cond.v[k]),
                     ("switching-limit-u", lambda k, x, y: _switch_sum(spec, k, x, y, cond.u.get)
                      + a * cond.u[k] - a * cond.beta1 * cond.v[k])):
        per_k = {k: [] for k in ks}
        for r in radii:
            x, y = phase_sphere(d, r, n_sphere)
            if spec.overdamped:
                y = np.zeros((x.shape[0], 0))
            for k in ks:
                per_k[k].append(float(np.max(fn(k, x, y))))
        results = [_limit_sign(f"{name}[k={k}]", radii, per_k[k], want_negative=True) for k in ks]
        worst = min(results, key=lambda res: res.worst_margin)
        statuses = {res.status for res in results}
        status = FAIL if FAIL in statuses else INCONCLUSIVE if INCONCLUSIVE in statuses else PASS
        out.append(ConditionResult(name, status, radii, worst.values, worst.worst_margin,
                                   note="; ".join(f"{res.name}: {res.status}" for res in results)))

    lim = cond.alpha_limit
    out.append(ConditionResult("alpha-range", PASS if cond.alpha <= lim else FAIL, [], [],
                               lim - cond.alpha, note=f"alpha={cond.alpha:g} <= {lim:.6g}"))
    return out


# ----------------------------------------------------------------------------- LDP ratio


@dataclass
class RatioProbe:
    radii: list
    maxima: list
    per_regime: dict
    threshold: float
    passed: bool
    monotone_tail: bool


def ldp_ratio_probe(spec: SystemSpec, W: LyapunovCandidate, radii: Sequence[float],
                    regimes: Sequence[int] | None = None, threshold: float = -10.0,
                    n_sphere: int = 101) -> RatioProbe:
    """Maximum of ``AW/W`` over each sphere (and regime) along a radius schedule.

    Passes when the final maximum lies below ``threshold`` and the last three
    maxima decrease strictly.
    """
    regimes = tuple(regimes or spec.regimes or (1,))
    radii = [float(r) for r in radii]
    if len(radii) < 3:
        raise ConfigurationError("radius schedule needs at least 3 entries")
    d = spec.dim
    per = {k: [] for k in regimes}
    for r in radii:
        if spec.overdamped:
            x = position_sphere(d, r)
            y = np.zeros((x.shape[0], 0))
        else:
            x, y = phase_sphere(d, r, n_sphere)
        for k in regimes:
            per[k].append(float(np.max(W.ratio(spec, x, y, k))))
    maxima = [max(per[k][i] for k in regimes) for i in range(len(radii))]
    mono = _tail_monotone(maxima, increasing=False)
    return RatioProbe(radii, maxima, per, threshold, bool(maxima[-1] < threshold and mono), mono)
