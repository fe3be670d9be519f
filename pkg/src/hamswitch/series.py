"""Monte Carlo checks of the jump-count expansions of transition kernels and resolvents.

The transition probability to ``A x {l}`` splits by the number of accepted
switches on ``[0, t]``: the zero-switch term is the killed-process kernel and
the one-switch term is the event "exactly one accepted switch, endpoint in
the target". Everything with two or more switches is bounded by the
probability of at least two dominating events, ``1 - exp(-Ht)(1 + Ht)``.
The resolvent splits the same way, by inter-switch segment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import PreconditionError, UnsupportedOrderError
from .model import HybridState, SystemSpec
from .rng import as_stream
from .simulate import DEFAULT_DT, Target, mean_and_se, run_ensemble


@dataclass(frozen=True)
class SeriesTermEstimate:
    order: int
    value: float
    standard_error: float
    n_paths: int


def _bernoulli(hits: np.ndarray) -> tuple[float, float]:
    p = float(np.mean(hits))
    return p, math.sqrt(p * (1 - p) / hits.size)


def series_term(spec: SystemSpec, s0: HybridState, t: float, target: Target, m: int,
                n_paths: int, dt: float = DEFAULT_DT, rng=None, workers: int = 1
                ) -> SeriesTermEstimate:
    """Order-``m`` term of the transition series (``m`` in {0, 1}).

    ``m = 0`` runs the killed process (stopped at the first accepted switch);
    ``m = 1`` scores full paths on the event {exactly one accepted switch,
    endpoint in ``target``}.
    """
    if m not in (0, 1):
        raise UnsupportedOrderError(f"only orders 0 and 1 are supported, got {m!r}")
    if m == 0 and target.regime is not None and target.regime != s0.k:
        return SeriesTermEstimate(0, 0.0, 0.0, n_paths)
    res = run_ensemble(spec, s0, t, min(dt, t), n_paths, rng=rng, kill_on_accept=(m == 0),
                       workers=workers)
    fin = res.final
    inside = target.contains(fin.x, fin.y, fin.k)
    hits = inside & fin.alive if m == 0 else inside & (fin.n_accepted == 1)
    p, se = _bernoulli(hits)
    return SeriesTermEstimate(m, p, se, n_paths)


def residual_bound(H: float, t: float) -> float:
    """Probability of at least two events of a rate-``H`` Poisson clock on ``[0, t]``."""
    return -math.expm1(-H * t) - H * t * math.exp(-H * t)


@dataclass
class SeriesReport:
    t: float
    full: float
    full_se: float
    terms: list[SeriesTermEstimate]
    partial_sums: list[float]
    residual: float
    residual_se: float
    bound: float

    @property
    def passed(self) -> bool:
        slack = 3 * self.residual_se
        return -slack <= self.residual <= self.bound + slack

    def rows(self):
        """``(term, estimate, SE, bound, pass)`` rows for tabular output."""
        out = [("full", self.full, self.full_se, 1.0, 0.0 <= self.full <= 1.0)]
        for term in self.terms:
            out.append((f"m={term.order}", term.value, term.standard_error, 1.0, True))
        for i, s in enumerate(self.partial_sums):
            out.append((f"sum<= {i}", s, float("nan"), self.full + 3 * self.full_se,
                        s <= self.full + 3 * self.full_se + 3 * self.terms[i].standard_error))
        out.append(("residual", self.residual, self.residual_se, self.bound, self.passed))
        return out


def check_series(spec: SystemSpec, s0: HybridState, t: float, target: Target, n_paths: int,
                 dt: float = DEFAULT_DT, rng=None, workers: int = 1) -> SeriesReport:
    """Full transition estimate against the zero- and one-switch partial sums."""
    stream = as_stream(rng)
    res = run_ensemble(spec, s0, t, min(dt, t), n_paths, rng=stream.child(0), workers=workers)
    fin = res.final
    inside = target.contains(fin.x, fin.y, fin.k)
    full, full_se = _bernoulli(inside)
    terms = [series_term(spec, s0, t, target, 0, n_paths, dt, stream.child(1), workers)]
    one = inside & (fin.n_accepted == 1)
    p1, se1 = _bernoulli(one)
    terms.append(SeriesTermEstimate(1, p1, se1, n_paths))
    partial = list(np.cumsum([term.value for term in terms]))
    residual = full - partial[-1]
    # the killed run is independent of the full run; the one-switch term is not
    resid_se = math.sqrt(terms[0].standard_error ** 2
                         + _bernoulli(inside & (fin.n_accepted != 1))[1] ** 2)
    return SeriesReport(t, full, full_se, terms, [float(s) for s in partial], float(residual),
                        resid_se, residual_bound(spec.H_bound, t))


@dataclass(frozen=True)
class LowerBoundReport:
    killed: float
    killed_se: float
    frozen: float
    frozen_se: float
    factor: float

    @property
    def margin(self) -> float:
        return self.killed - self.factor * self.frozen

    @property
    def passed(self) -> bool:
        se = math.hypot(self.killed_se, self.factor * self.frozen_se)
        return self.margin >= -3 * se


def killed_lower_bound(spec: SystemSpec, s0: HybridState, t: float, target: Target,
                       n_paths: int, dt: float = DEFAULT_DT, rng=None,
                       workers: int = 1) -> LowerBoundReport:
    """Compare the killed kernel with ``exp(-Ht)`` times the frozen-regime kernel."""
    stream = as_stream(rng)
    killed = series_term(spec, s0, t, target, 0, n_paths, dt, stream.child(0), workers)
    frozen_spec = spec.frozen(s0.k)
    res = run_ensemble(frozen_spec, s0, t, min(dt, t), n_paths, rng=stream.child(1),
                       workers=workers)
    fin = res.final
    p, se = _bernoulli(target.contains(fin.x, fin.y, fin.k))
    return LowerBoundReport(killed.value, killed.standard_error, p, se,
                            math.exp(-spec.H_bound * t))


@dataclass
class ResolventEstimate:
    alpha: float
    psi: list[tuple[int, float, float]]
    full: float
    full_se: float
    f_sup: float
    H: float
    horizon: float
    tail: float = field(default=0.0)

    def bound(self, i: int) -> float:
        return (self.H / self.alpha) ** i * self.f_sup / self.alpha

    def term_passed(self, i: int) -> bool:
        _, value, se = self.psi[i]
        return abs(value) <= self.bound(i) + 3 * se + self.tail

    @property
    def full_passed(self) -> bool:
        return abs(self.full) <= self.f_sup / self.alpha + 3 * self.full_se + self.tail

    @property
    def passed(self) -> bool:
        return self.full_passed and all(self.term_passed(i) for i in range(len(self.psi)))

    def rows(self):
        out = [(f"psi{i}", v, se, self.bound(i), self.term_passed(i)) for i, v, se in self.psi]
        out.append(("G", self.full, self.full_se, self.f_sup / self.alpha, self.full_passed))
        return out


def check_resolvent_bounds(spec: SystemSpec, s0: HybridState, f: Callable, f_sup: float,
                           alpha: float, i_max: int = 1, n_paths: int = 10_000,
                           dt: float = DEFAULT_DT, horizon: float | None = None, rng=None,
                           workers: int = 1) -> ResolventEstimate:
    """Estimate the segment terms ``psi_0..psi_{i_max}`` and the full resolvent.

    ``f(x, y, k)`` is a bounded batch callable with ``sup |f| <= f_sup``. The
    time integral is truncated at ``horizon`` (default ``10 / alpha``); the
    neglected tail, at most ``f_sup exp(-alpha horizon) / alpha``, is carried
    as extra slack in every bound check. Segment ``i`` runs between the
    ``i``-th and ``(i+1)``-th accepted switch, so ``psi_0`` is exactly the
    killed-process integral.
    """
    H = float(spec.H_bound)
    if not alpha >= H + 1:
        raise PreconditionError(f"alpha={alpha} is below H + 1 = {H + 1}")
    if i_max not in (0, 1, 2):
        raise UnsupportedOrderError(f"i_max must be 0, 1 or 2, got {i_max!r}")
    horizon = 10.0 / alpha if horizon is None else float(horizon)
    res = run_ensemble(spec, s0, horizon, min(dt, horizon), n_paths, rng=rng,
                       resolvent=(f, alpha, i_max + 1), workers=workers)
    seg = res.resolvent
    psi = []
    for i in range(i_max + 1):
        value, se = mean_and_se(seg[:, i])
        psi.append((i, value, se))
    full, full_se = mean_and_se(seg.sum(axis=1))
    tail = f_sup * math.exp(-alpha * horizon) / alpha
    return ResolventEstimate(float(alpha), psi, full, full_se, float(f_sup), H, horizon, tail)
