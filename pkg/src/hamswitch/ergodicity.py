"""Occupation measures, distances between binned laws, decay fits and first passages."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats

from .errors import ConfigurationError
from .model import HybridState, SystemSpec
from .rng import as_stream
from .simulate import DEFAULT_DT, Trajectory, run_ensemble, snapshot_at


@dataclass(frozen=True)
class Binning:
    """Per-coordinate bin edges over the phase vector ``(x, y)`` times a regime window.

    An entry of ``edges`` set to ``None`` marginalizes that coordinate.
    ``regimes=None`` pools all regimes into one layer.
    """
    edges: tuple
    regimes: tuple | None = None

    def __post_init__(self):
        edges = tuple(None if e is None else np.asarray(e, dtype=float) for e in self.edges)
        for e in edges:
            if e is not None and (e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0)):
                raise ConfigurationError("bin edges must be increasing with at least 2 entries")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def uniform(cls, lo: float, hi: float, width: float, phase_dim: int = 1, regimes=None,
                marginal: Sequence[int] = ()) -> "Binning":
        n = int(round((hi - lo) / width))
        e = np.linspace(lo, hi, n + 1)
        return cls(tuple(None if i in marginal else e for i in range(phase_dim)), regimes)

    @property
    def shape(self) -> tuple:
        inner = tuple(e.size - 1 for e in self.edges if e is not None)
        return (1 if self.regimes is None else len(self.regimes),) + inner

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    def same_as(self, other: "Binning") -> bool:
        if len(self.edges) != len(other.edges) or self.regimes != other.regimes:
            return False
        return all((a is None and b is None) or (a is not None and b is not None and
                                                 a.shape == b.shape and np.array_equal(a, b))
                   for a, b in zip(self.edges, other.edges))

    def flat_index(self, x, y, k) -> np.ndarray:
        """Flat cell index per point; ``-1`` for points outside the box or regime window."""
        z = np.concatenate([np.asarray(x, dtype=float), np.asarray(y, dtype=float)], axis=1)
        if z.shape[1] != len(self.edges):
            raise ConfigurationError(f"binning has {len(self.edges)} coordinates, state has {z.shape[1]}")
        k = np.asarray(k)
        n = z.shape[0]
        if self.regimes is None:
            idx = np.zeros(n, dtype=np.int64)
            ok = np.ones(n, dtype=bool)
        else:
            lookup = {r: i for i, r in enumerate(self.regimes)}
            idx = np.array([lookup.get(int(kk), -1) for kk in k], dtype=np.int64) \
                if len(self.regimes) > 1 else np.where(k == self.regimes[0], 0, -1)
            ok = idx >= 0
        for i, e in enumerate(self.edges):
            if e is None:
                continue
            j = np.searchsorted(e, z[:, i], side="right") - 1
            # the right-most edge is closed
            j = np.where(z[:, i] == e[-1], e.size - 2, j)
            ok &= (j >= 0) & (j < e.size - 1)
            idx = idx * (e.size - 1) + np.clip(j, 0, e.size - 2)
        return np.where(ok, idx, -1)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell centers (marginalized coordinates at 0) and regimes, in flat order."""
        axes = [0.5 * (e[1:] + e[:-1]) for e in self.edges if e is not None]
        regs = np.array(self.regimes if self.regimes is not None else (0,))
        mesh = np.meshgrid(regs, *axes, indexing="ij")
        ks = mesh[0].reshape(-1)
        cols, j = [], 1
        for e in self.edges:
            if e is None:
                cols.append(np.zeros(ks.size))
            else:
                cols.append(mesh[j].reshape(-1))
                j += 1
        return np.stack(cols, axis=1), ks


@dataclass
class OccupationMeasure:
    binning: Binning
    masses: np.ndarray
    outside: float

    def __post_init__(self):
        if np.any(self.masses < 0) or self.outside < -1e-12:
            raise ConfigurationError("masses must be non-negative")

    @property
    def total(self) -> float:
        return float(self.masses.sum() + self.outside)

    @classmethod
    def from_points(cls, binning: Binning, x, y, k, weights=None) -> "OccupationMeasure":
        cells = binning.flat_index(x, y, k)
        w = np.ones(cells.size) if weights is None else np.asarray(weights, dtype=float)
        total = w.sum()
        inside = cells >= 0
        masses = np.bincount(cells[inside], weights=w[inside], minlength=binning.n_cells) / total
        return cls(binning, masses, float(w[~inside].sum() / total))

    @classmethod
    def from_cdf(cls, binning: Binning, cdf: Callable, regime_weights=None) -> "OccupationMeasure":
        """Exact cell masses of a one-coordinate law with distribution function ``cdf``."""
        used = [e for e in binning.edges if e is not None]
        if len(used) != 1:
            raise ConfigurationError("from_cdf needs exactly one binned coordinate")
        cell = np.diff(cdf(used[0]))
        layers = binning.shape[0]
        weights = np.ones(layers) / layers if regime_weights is None else np.asarray(regime_weights)
        masses = np.concatenate([w * cell for w in weights])
        return cls(binning, masses, float(max(0.0, 1.0 - masses.sum())))


def occupation_measure(traj: Trajectory, binning: Binning) -> OccupationMeasure:
    """Time-weighted histogram; each interval is charged to its left endpoint."""
    if len(traj) < 2:
        raise ConfigurationError("occupation needs a trajectory with at least two samples")
    dt = np.diff(traj.times)
    cells = binning.flat_index(traj.x[:-1], traj.y[:-1], traj.k[:-1])
    span = float(traj.times[-1] - traj.times[0])
    inside = cells >= 0
    masses = np.bincount(cells[inside], weights=dt[inside], minlength=binning.n_cells) / span
    return OccupationMeasure(binning, masses, float(dt[~inside].sum() / span))


def long_run_occupation(spec: SystemSpec, s0: HybridState, T: float, binning: Binning,
                        dt: float = DEFAULT_DT, burn_in_fraction: float = 0.1,
                        n_replicas: int = 1, rng=None, workers: int = 1) -> OccupationMeasure:
    """Occupation measure after burn-in, pooled over independent replicas of length ``T``."""
    if not 0 <= burn_in_fraction < 1:
        raise ConfigurationError("burn_in_fraction must lie in [0, 1)")
    res = run_ensemble(spec, s0, T, dt, n_replicas, rng=rng, workers=workers,
                       occupation=(binning, burn_in_fraction * T))
    total = res.occupation_time
    return OccupationMeasure(binning, res.occupation / total, res.occupation_outside / total)


def _check_same(mu, nu):
    if not mu.binning.same_as(nu.binning):
        raise ConfigurationError("measures are defined on different binnings")


def tv_distance(mu: OccupationMeasure, nu: OccupationMeasure) -> float:
    """Half the l1 distance, with the out-of-box mass as one extra cell."""
    _check_same(mu, nu)
    return float(0.5 * (np.abs(mu.masses - nu.masses).sum() + abs(mu.outside - nu.outside)))


def psi_distance(mu: OccupationMeasure, nu: OccupationMeasure, psi: Callable) -> float:
    """``sum_cells psi(center, k) |mu - nu|``; the out-of-box cell is not weighted.

    An upper-bound surrogate for the weighted variation norm on binned laws.
    """
    _check_same(mu, nu)
    z, ks = mu.binning.centers()
    w = np.asarray(psi(z, ks), dtype=float)
    return float(np.sum(w * np.abs(mu.masses - nu.masses)))


# ----------------------------------------------------------------------------- decay fit


@dataclass
class DecayFit:
    times: np.ndarray
    distances: np.ndarray
    noise_floor: np.ndarray
    used: np.ndarray
    theta: float = math.nan
    theta_ci: tuple = (math.nan, math.nan)
    log_intercept: float = math.nan
    refused: bool = False
    note: str = ""

    @property
    def contracting(self) -> bool:
        return not self.refused and self.theta_ci[1] < 1.0


def noise_floor(p: np.ndarray, q: np.ndarray, n1: int, n2: int) -> float:
    """Expected binned TV between two independent samples of one law (normal approximation)."""
    var = p * (1 - p) / n1 + q * (1 - q) / n2
    return float(0.5 * np.sum(np.sqrt(2 / math.pi * var)))


def fit_log_linear(times, distances, level: float = 0.95):
    """OLS of ``log d`` on ``t``; returns slope, intercept and a t-based CI for the slope."""
    t = np.asarray(times, dtype=float)
    ld = np.log(np.asarray(distances, dtype=float))
    n = t.size
    tc = t - t.mean()
    slope = float(np.sum(tc * (ld - ld.mean())) / np.sum(tc * tc))
    intercept = float(ld.mean() - slope * t.mean())
    resid = ld - intercept - slope * t
    s2 = float(np.sum(resid ** 2) / (n - 2)) if n > 2 else 0.0
    se = math.sqrt(s2 / float(np.sum(tc * tc)))
    q = float(stats.t.ppf(0.5 + level / 2, max(n - 2, 1)))
    return slope, intercept, (slope - q * se, slope + q * se)


def fit_decay(spec: SystemSpec, s0_pair: tuple[HybridState, HybridState], times: Sequence[float],
              n_paths: int, binning: Binning, dt: float = DEFAULT_DT, rng=None,
              floor_factor: float = 2.0, mode: str = "thinning", workers: int = 1) -> DecayFit:
    """Binned TV distance between the laws started from two states, fitted as ``Theta theta^t``.

    Only times whose distance exceeds ``floor_factor`` times the sampling
    noise floor enter the fit; fewer than three such points refuse the fit.
    """
    times = np.asarray(sorted(float(t) for t in times))
    if times.size < 3 or times[0] <= 0:
        raise ConfigurationError("fit_decay needs at least 3 positive times")
    stream = as_stream(rng)
    runs = [run_ensemble(spec, s, float(times[-1]), dt, n_paths, mode=mode, rng=stream.child(i),
                         save_times=times, workers=workers) for i, s in enumerate(s0_pair)]
    dist, floor = [], []
    for t in times:
        laws = []
        for res in runs:
            snap = snapshot_at(res, t)
            w = snap.weight if mode == "weighted" else None
            laws.append(OccupationMeasure.from_points(binning, snap.x, snap.y, snap.k, w))
        dist.append(tv_distance(*laws))
        p = np.append(laws[0].masses, laws[0].outside)
        q = np.append(laws[1].masses, laws[1].outside)
        floor.append(noise_floor(p, q, n_paths, n_paths))
    dist, floor = np.array(dist), np.array(floor)
    used = dist > floor_factor * floor
    fit = DecayFit(times, dist, floor, used)
    if used.sum() < 3:
        fit.refused = True
        fit.note = f"only {int(used.sum())} distances above the noise floor"
        return fit
    slope, intercept, (lo, hi) = fit_log_linear(times[used], dist[used])
    fit.theta, fit.log_intercept = math.exp(slope), intercept
    fit.theta_ci = (math.exp(lo), math.exp(hi))
    return fit


# ----------------------------------------------------------------------------- first passage


@dataclass
class PassageSample:
    level: float
    start: float
    times: np.ndarray
    censored: int
    horizon: float
    drift: float = 1.0

    @property
    def n(self) -> int:
        return self.times.size + self.censored

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.n if self.n else 0.0

    @property
    def horizon_too_small(self) -> bool:
        return self.censored_fraction >= 0.5


def passage_times(drift: float, start: float, level: float, n_paths: int, dt: float = 1e-4,
                  horizon: float = 50.0, rng=None, chunk_steps: int = 2000) -> PassageSample:
    """First hitting times of ``level`` by ``start + drift t + W(t)``.

    Crossings are located by linear interpolation between the bracketing grid
    points. Only paths that have not yet crossed are advanced.
    """
    if level == start:
        return PassageSample(level, start, np.zeros(n_paths), 0, horizon, drift)
    if not (dt > 0 and horizon > dt):
        raise ConfigurationError("need 0 < dt < horizon")
    gen = as_stream(rng).generator()
    sign = 1.0 if level > start else -1.0
    gap = sign * (level - start)
    pos = np.zeros(n_paths)
    active = np.arange(n_paths)
    out = np.full(n_paths, np.nan)
    n_steps = int(math.ceil(horizon / dt))
    step0 = 0
    sd = math.sqrt(dt)
    while active.size and step0 < n_steps:
        m = min(chunk_steps, n_steps - step0)
        inc = sign * drift * dt + gen.standard_normal((active.size, m)) * sd
        path = pos[active, None] + np.cumsum(inc, axis=1)
        hit = path >= gap
        any_hit = hit.any(axis=1)
        j = np.argmax(hit, axis=1)
        rows = np.flatnonzero(any_hit)
        jj = j[rows]
        prev = np.where(jj > 0, path[rows, np.maximum(jj - 1, 0)], pos[active[rows]])
        cur = path[rows, jj]
        frac = (gap - prev) / (cur - prev)
        out[active[rows]] = (step0 + jj + frac) * dt
        pos[active] = path[:, -1]
        active = active[~any_hit]
        step0 += m
    hit_times = out[np.isfinite(out)]
    hit_times = hit_times[hit_times <= horizon]
    return PassageSample(level, start, np.sort(hit_times), n_paths - hit_times.size, horizon, drift)


def passage_density(gap: float, t, drift: float = 1.0) -> np.ndarray:
    """Density of the first time ``drift t + W(t)`` reaches ``gap > 0``."""
    if not gap > 0:
        raise ConfigurationError("gap must be positive")
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = gap / np.sqrt(2 * math.pi * t ** 3) * np.exp(-(gap - drift * t) ** 2 / (2 * t))
    return np.where(t > 0, dens, 0.0)


def passage_cdf(gap: float, t, drift: float = 1.0) -> np.ndarray:
    """Distribution function by integrating :func:`passage_density` between sorted points."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    order = np.argsort(t)
    out = np.zeros(t.size)
    acc, prev = 0.0, 0.0

    def f(s):
        return float(passage_density(gap, s, drift))

    for i in order:
        ti = max(t[i], 0.0)
        if ti > prev:
            acc += integrate.quad(f, prev, ti, limit=200)[0]
            prev = ti
        out[i] = acc
    return np.minimum(out, 1.0)


def passage_ks(sample: PassageSample) -> tuple[float, float]:
    """KS statistic and p-value of the observed passage times against the analytic law.

    Censored paths enter as the mass beyond the horizon.
    """
    gap = abs(sample.level - sample.start)
    n = sample.n
    t = sample.times
    cdf = passage_cdf(gap, t, sample.drift)
    i = np.arange(1, t.size + 1)
    d = max(float(np.max(i / n - cdf, initial=0.0)), float(np.max(cdf - (i - 1) / n, initial=0.0)))
    if sample.censored:
        tail = float(passage_cdf(gap, [sample.horizon], sample.drift)[0])
        d = max(d, abs(t.size / n - tail))
    return d, float(stats.kstwo.sf(d, n))


@dataclass
class HyperRecurrence:
    lam: float
    caps: np.ndarray
    means: np.ndarray
    tail_slope: float
    diverging: bool
    decades: float = field(default=0.0)


def hyper_recurrence_probe(samples: PassageSample, lam: float, n_caps: int = 41,
                           min_exceed: int = 10, slope_threshold: float = 0.1
                           ) -> HyperRecurrence:
    """Truncated means ``E[min(exp(lam tau), M)]`` over growing caps ``M``.

    Caps run from 1 to the level still exceeded by ``min_exceed`` samples.
    The curve is declared diverging when its log-log slope exceeds
    ``slope_threshold`` on each of the last two decades of caps; with less
    than two decades of range it is never declared diverging.
    Censored paths count at ``exp(lam horizon)``, a lower bound.
    """
    if lam < 0:
        raise ConfigurationError("lambda must be non-negative")
    vals = np.exp(lam * np.concatenate([samples.times,
                                        np.full(samples.censored, samples.horizon)]))
    if lam == 0:
        caps = np.geomspace(1.0, 100.0, n_caps)
        return HyperRecurrence(lam, caps, np.ones(n_caps), 0.0, False, 2.0)
    top = np.sort(vals)[-min_exceed] if vals.size >= min_exceed else vals.max()
    top = max(top, 1.0 + 1e-9)
    caps = np.geomspace(1.0, top, n_caps)
    means = np.array([np.mean(np.minimum(vals, c)) for c in caps])
    decades = math.log10(top)
    lc, lm = np.log(caps), np.log(means)

    def slope_between(lo, hi):
        w = (caps >= lo * (1 - 1e-12)) & (caps <= hi * (1 + 1e-12))
        return float(np.polyfit(lc[w], lm[w], 1)[0]) if w.sum() >= 2 else 0.0

    slope = slope_between(top / 10.0 if decades >= 1 else 1.0, top)
    earlier = slope_between(top / 100.0, top / 10.0) if decades >= 2 else 0.0
    diverging = decades >= 2 and slope > slope_threshold and earlier > slope_threshold
    return HyperRecurrence(lam, caps, means, slope, diverging, decades)
