"""Euler-Maruyama integration interleaved with exact regime switching.

The engine advances a batch of independent paths on a common time grid.
Dominating-chain proposals that fall inside a grid step split that step with
a Brownian bridge, so the phase state at the proposal time is the integrated
state rather than an interpolation. Paths are grouped by regime before any
user callable is evaluated, so callables always see ``(m, d)`` batches and a
scalar regime.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BlowUpError, ConfigurationError, RunawaySwitchingError
from .model import HybridState, SystemSpec, TestFunction, _matrix, _vector, eval_generator, \
    generator_batch
from .rng import BRIDGE, BROWNIAN, JUMPS, RngStream, as_stream
from .switching import JumpRecord, acceptance_batch, sample_dominating

STATE_CEILING = 1e8
MAX_EVENTS = 10 ** 6
DEFAULT_DT = 1e-3
BLOCK_SIZE = 16384
MODES = ("thinning", "weighted")


def em_step(spec: SystemSpec, s: HybridState, dt: float, dW) -> HybridState:
    """One Euler-Maruyama step with the regime held fixed."""
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt!r}")
    dW = np.asarray(dW, dtype=float).reshape(1, spec.dim)
    x, y = _advance(spec, s.x[None, :], s.y[None, :], np.array([s.k]), np.array([dt]), dW, (s.k,))
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise BlowUpError("non-finite state after Euler-Maruyama step", state=s, time=dt)
    return HybridState(x[0], y[0], s.k)


def _advance(spec, x, y, k, h, dW, regimes):
    hcol = h[:, None]
    d = spec.dim
    if spec.overdamped:
        new_x = np.empty_like(x)
        for r, sel in _groups(k, regimes):
            xm, ym = _take(x, sel), _take(y, sel)
            sig = _matrix(spec.noise(xm, ym, r), xm.shape[:-1], d)
            grad = _vector(spec.grad_potential(xm, r), xm.shape[:-1], d, "grad_potential")
            new_x[sel] = (xm - grad * _take(hcol, sel)
                          + np.einsum("...ij,...j->...i", sig, _take(dW, sel)))
        return new_x, y
    new_x = x + y * hcol
    new_y = np.empty_like(y)
    for r, sel in _groups(k, regimes):
        xm, ym = _take(x, sel), _take(y, sel)
        batch = xm.shape[:-1]
        sig = _matrix(spec.noise(xm, ym, r), batch, d)
        c = _matrix(spec.damping(xm, ym, r), batch, d)
        grad = _vector(spec.grad_potential(xm, r), batch, d, "grad_potential")
        drift = np.einsum("...ij,...j->...i", c, ym) + grad
        new_y[sel] = ym - drift * _take(hcol, sel) + np.einsum("...ij,...j->...i", sig,
                                                               _take(dW, sel))
    return new_x, new_y


def _groups(k, regimes):
    """Yield ``(regime, selector)`` pairs; the selector is a full slice when one regime covers all."""
    if len(regimes) == 1:
        yield regimes[0], slice(None)
        return
    first = k[0] if k.size else None
    if k.size and np.all(k == first):
        yield int(first), slice(None)
        return
    for r in regimes:
        sel = k == r
        if sel.any():
            yield r, sel


def _take(a, sel):
    return a if isinstance(sel, slice) else a[sel]


def _eval_grouped(fn, x, y, k, regimes, width=None):
    out = np.zeros(k.shape[0] if width is None else (k.shape[0], width))
    for r, sel in _groups(k, regimes):
        out[sel] = fn(_take(x, sel), _take(y, sel), r)
    return out


# ----------------------------------------------------------------------------- records


@dataclass
class Snapshot:
    t: float
    x: np.ndarray
    y: np.ndarray
    k: np.ndarray
    alive: np.ndarray
    weight: np.ndarray
    n_accepted: np.ndarray
    integrals: np.ndarray | None = None

    def concat(self, other: "Snapshot") -> "Snapshot":
        ints = None if self.integrals is None else np.concatenate([self.integrals, other.integrals])
        return Snapshot(self.t, np.concatenate([self.x, other.x]), np.concatenate([self.y, other.y]),
                        np.concatenate([self.k, other.k]), np.concatenate([self.alive, other.alive]),
                        np.concatenate([self.weight, other.weight]),
                        np.concatenate([self.n_accepted, other.n_accepted]), ints)


@dataclass
class EnsembleResult:
    snapshots: dict[float, Snapshot]
    final: Snapshot
    kill_time: np.ndarray
    first_jump_time: np.ndarray
    first_jump_target: np.ndarray
    n_events: np.ndarray
    resolvent: np.ndarray | None = None
    occupation: np.ndarray | None = None
    occupation_outside: float = 0.0
    occupation_time: float = 0.0
    record: dict | None = None

    @property
    def n_paths(self) -> int:
        return self.final.k.shape[0]

    @property
    def zero_weight_count(self) -> int:
        return int(np.sum(self.final.weight == 0))

    @staticmethod
    def merge(parts: Sequence["EnsembleResult"]) -> "EnsembleResult":
        """Concatenate block results in block order (the reduction order is fixed)."""
        head = parts[0]
        if len(parts) == 1:
            return head

        def cat(name):
            vals = [getattr(p, name) for p in parts]
            return None if vals[0] is None else np.concatenate(vals)

        snaps = {}
        for t in head.snapshots:
            s = head.snapshots[t]
            for p in parts[1:]:
                s = s.concat(p.snapshots[t])
            snaps[t] = s
        occ = None
        if head.occupation is not None:
            occ = head.occupation.copy()
            for p in parts[1:]:
                occ += p.occupation
        return EnsembleResult(
            snapshots=snaps, final=snaps[max(snaps)], kill_time=cat("kill_time"),
            first_jump_time=cat("first_jump_time"), first_jump_target=cat("first_jump_target"),
            n_events=cat("n_events"), resolvent=cat("resolvent"), occupation=occ,
            occupation_outside=sum(p.occupation_outside for p in parts),
            occupation_time=sum(p.occupation_time for p in parts),
        )


def time_grid(T: float, dt: float, extra: Sequence[float] = ()) -> np.ndarray:
    if not (T > 0 and dt > 0):
        raise ConfigurationError(f"T and dt must be positive (T={T!r}, dt={dt!r})")
    if dt > T:
        raise ConfigurationError(f"dt={dt} exceeds the horizon T={T}")
    n = int(math.floor(T / dt + 1e-9))
    grid = np.concatenate([np.arange(n + 1) * dt, [T], np.asarray(extra, dtype=float)])
    grid = np.unique(grid[(grid >= 0) & (grid <= T)])
    keep = np.concatenate([[True], np.diff(grid) > 1e-12 * max(T, 1.0)])
    grid = grid[keep]
    grid[-1] = T
    return grid


# ----------------------------------------------------------------------------- engine


class _Block:
    """One batch of paths sharing a seed stream; see :func:`run_ensemble`."""

    def __init__(self, spec, x, y, k, mode, stream, kill_on_accept, integrands, resolvent,
                 occupation, record, max_events):
        if mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {mode!r}")
        self.spec = spec
        self.n = k.shape[0]
        self.x, self.y, self.k = x.copy(), y.copy(), k.astype(np.int64).copy()
        self.weighted = mode == "weighted"
        self.kill_on_accept = kill_on_accept
        self.max_events = max_events
        self.regimes = tuple(spec.regimes) if spec.regimes else tuple(int(r) for r in np.unique(k))
        self.switching = any(spec.dominating(r).total > 0 for r in self.regimes)
        self.gen_bm = stream.generator(BROWNIAN)
        self.gen_jump = stream.generator(JUMPS)
        self.gen_bridge = stream.generator(BRIDGE)
        n = self.n
        self.alive = np.ones(n, dtype=bool)
        self.kill_time = np.full(n, math.inf)
        self.weight = np.ones(n)
        self.n_acc = np.zeros(n, dtype=np.int64)
        self.n_ev = np.zeros(n, dtype=np.int64)
        self.first_time = np.full(n, math.inf)
        self.first_target = np.zeros(n, dtype=np.int64)

        self.integrands = list(integrands)
        self.integrals = np.zeros((n, len(self.integrands))) if self.integrands else None
        self.g_cur = self._integrand_values(slice(None)) if self.integrands else None

        self.resolvent = resolvent
        if resolvent is not None:
            f, alpha, segments = resolvent
            self.rf, self.alpha, self.segments = f, float(alpha), int(segments)
            self.seg = np.zeros((n, self.segments + 1))
            self.f_cur = _eval_grouped(f, self.x, self.y, self.k, self.regimes)

        self.occupation = occupation
        if occupation is not None:
            binning, burn_in = occupation
            self.binning, self.burn_in = binning, float(burn_in)
            self.occ = np.zeros(binning.n_cells)
            self.occ_out = 0.0
            self.occ_time = 0.0

        if self.weighted:
            self.qhat_total = {r: self.spec.dominating(r).total for r in self.regimes}
            self.r_cur = self._rate_gap(slice(None))

        self.record = record
        if record:
            self.rec_t, self.rec_x, self.rec_y, self.rec_k, self.rec_w = [], [], [], [], []
            self.events: list[JumpRecord] = []
            self._record_state(0.0)

    # --- per-path quantities evaluated on a subset --------------------------------
    def _integrand_values(self, idx):
        x, y, k = self.x[idx], self.y[idx], self.k[idx]
        out = np.zeros((k.shape[0], len(self.integrands)))
        for j, fn in enumerate(self.integrands):
            out[:, j] = _eval_grouped(fn, x, y, k, self.regimes)
        return out

    def _rate_gap(self, idx, x=None, y=None):
        x = self.x[idx] if x is None else x
        y = self.y[idx] if y is None else y
        k = self.k[idx]
        gap = np.zeros(k.shape[0])
        for r, sel in _groups(k, self.regimes):
            xs, ys = _take(x, sel), _take(y, sel)
            gap[sel] = self.qhat_total[r] - self.spec.total_rate(r, xs, ys)
        return gap

    def _record_state(self, t):
        self.rec_t.append(float(t))
        self.rec_x.append(self.x[0].copy())
        self.rec_y.append(self.y[0].copy())
        self.rec_k.append(int(self.k[0]))
        self.rec_w.append(float(self.weight[0]))

    # --- dynamics -------------------------------------------------------------------
    def _substep(self, idx, h, dW, t_start):
        """Advance paths ``idx`` by per-path step ``h`` using increments ``dW``."""
        x, y, k = self.x[idx], self.y[idx], self.k[idx]
        if self.occupation is not None:
            self._occupy(x, y, k, h, t_start)
        nx, ny = _advance(self.spec, x, y, k, h, dW, self.regimes)
        size = np.abs(np.concatenate([nx, ny], axis=1)).max(axis=1, initial=0.0)
        bad = ~(size <= STATE_CEILING)
        if bad.any():
            j = int(np.flatnonzero(bad)[0])
            raise BlowUpError(
                f"state left the ceiling {STATE_CEILING:g}; reduce dt",
                state=(x[j].tolist(), y[j].tolist(), int(k[j])), time=float(t_start[j] + h[j]),
            )
        self.x[idx], self.y[idx] = nx, ny
        if self.integrands:
            g_new = self._integrand_values(idx)
            self.integrals[idx] += 0.5 * h[:, None] * (self.g_cur[idx] + g_new)
            self.g_cur[idx] = g_new
        if self.resolvent is not None:
            f_new = _eval_grouped(self.rf, nx, ny, k, self.regimes)
            t_end = t_start + h
            contrib = 0.5 * h * (np.exp(-self.alpha * t_start) * self.f_cur[idx]
                                 + np.exp(-self.alpha * t_end) * f_new)
            col = np.minimum(self.n_acc[idx], self.segments)
            rows = np.arange(self.n)[idx]
            self.seg[rows, col] += contrib
            self.f_cur[idx] = f_new
        if self.weighted:
            r_new = self._rate_gap(idx, nx, ny)
            self.weight[idx] *= np.exp(0.5 * h * (self.r_cur[idx] + r_new))
            self.r_cur[idx] = r_new

    def _occupy(self, x, y, k, h, t_start):
        use = t_start >= self.burn_in - 1e-12
        if not np.any(use):
            return
        if not np.all(use):
            x, y, k, h = x[use], y[use], k[use], h[use]
        cells = self.binning.flat_index(x, y, k)
        inside = cells >= 0
        self.occ += np.bincount(cells[inside], weights=h[inside], minlength=self.binning.n_cells)
        self.occ_out += float(h[~inside].sum())
        self.occ_time += float(h.sum())

    def _refresh(self, idx):
        """Recompute cached regime-dependent values after regime changes."""
        if self.integrands:
            self.g_cur[idx] = self._integrand_values(idx)
        if self.resolvent is not None:
            self.f_cur[idx] = _eval_grouped(self.rf, self.x[idx], self.y[idx], self.k[idx],
                                            self.regimes)
        if self.weighted:
            self.r_cur[idx] = self._rate_gap(idx)

    def run(self, grid, save_times):
        n, d = self.n, self.spec.dim
        save = {int(np.argmin(np.abs(grid - float(t)))) for t in save_times}
        snapshots = {}
        if 0 in save:
            snapshots[0.0] = self._snapshot(0.0)
        if self.switching:
            self.tau, self.target = sample_dominating(self.spec, self.k, np.zeros(n),
                                                      self.gen_jump, self.regimes)
        t_loc = np.zeros(n)
        all_paths = slice(None)
        for i in range(grid.size - 1):
            t0, t1 = float(grid[i]), float(grid[i + 1])
            dW = self.gen_bm.standard_normal((n, d)) * math.sqrt(t1 - t0)
            t_loc[:] = t0
            if self.switching:
                self._proposals(t1, t_loc, dW)
            alive_all = self.alive.all()
            idx = all_paths if alive_all else np.flatnonzero(self.alive)
            if alive_all or idx.size:
                h = t1 - t_loc[idx]
                self._substep(idx, h, dW[idx], t_loc[idx])
            if self.record and self.alive[0]:
                self._record_state(t1)
            if i + 1 in save or i == grid.size - 2:
                snapshots[t1] = self._snapshot(t1)
        return snapshots

    def _proposals(self, t1, t_loc, dW):
        d = self.spec.dim
        while True:
            due = self.alive & (self.tau <= t1)
            if not due.any():
                return
            idx = np.flatnonzero(due)
            m = idx.size
            s = self.tau[idx] - t_loc[idx]
            span = t1 - t_loc[idx]
            frac = np.divide(s, span, out=np.zeros(m), where=span > 0)
            bridge_sd = np.sqrt(np.maximum(s * (span - s), 0.0)
                                / np.where(span > 0, span, 1.0))
            part = dW[idx] * frac[:, None] + bridge_sd[:, None] * \
                self.gen_bridge.standard_normal((m, d))
            dW[idx] -= part
            self._substep(idx, s, part, t_loc[idx])
            t_loc[idx] = self.tau[idx]

            src, tgt = self.k[idx], self.target[idx]
            g = acceptance_batch(self.spec, src, tgt, self.x[idx], self.y[idx], self.regimes)
            if self.weighted:
                accept = np.ones(m, dtype=bool)
                self.weight[idx] *= g
            else:
                accept = self.gen_jump.random(m) < g
            self.n_ev[idx] += 1
            if self.n_ev[idx].max() > self.max_events:
                raise RunawaySwitchingError(
                    f"more than {self.max_events} switching events on one path")
            if self.record:
                self.events.append(JumpRecord(float(self.tau[0]), int(src[0]), int(tgt[0]),
                                              phantom=not bool(accept[0]), accept_prob=float(g[0])))
            jumped = idx[accept]
            if jumped.size:
                first = jumped[self.n_acc[jumped] == 0]
                self.first_time[first] = self.tau[first]
                self.first_target[first] = self.target[first]
                self.n_acc[jumped] += 1
                if self.kill_on_accept:
                    self.alive[jumped] = False
                    self.kill_time[jumped] = self.tau[jumped]
                    if self.record:
                        self._record_state(self.tau[0])
                else:
                    self.k[jumped] = self.target[jumped]
                    self._refresh(jumped)
                    if self.record:
                        self._record_state(self.tau[0])
            live = idx[self.alive[idx]]
            self.tau[idx] = math.inf
            if live.size:
                self.tau[live], self.target[live] = sample_dominating(
                    self.spec, self.k[live], t_loc[live], self.gen_jump, self.regimes)

    def _snapshot(self, t):
        return Snapshot(t, self.x.copy(), self.y.copy(), self.k.copy(), self.alive.copy(),
                        self.weight.copy(), self.n_acc.copy(),
                        None if self.integrals is None else self.integrals.copy())

    def result(self, snapshots):
        out = EnsembleResult(
            snapshots=snapshots, final=snapshots[max(snapshots)], kill_time=self.kill_time,
            first_jump_time=self.first_time, first_jump_target=self.first_target,
            n_events=self.n_ev, resolvent=self.seg if self.resolvent is not None else None,
        )
        if self.occupation is not None:
            out.occupation, out.occupation_outside, out.occupation_time = \
                self.occ, self.occ_out, self.occ_time
        if self.record:
            out.record = dict(t=np.array(self.rec_t), x=np.array(self.rec_x),
                              y=np.array(self.rec_y).reshape(len(self.rec_t), -1),
                              k=np.array(self.rec_k), w=np.array(self.rec_w), events=self.events)
        return out


def _broadcast_initial(spec, s0, n_paths):
    if isinstance(s0, HybridState):
        x = np.broadcast_to(s0.x, (n_paths, spec.dim)).astype(float)
        y = np.broadcast_to(s0.y, (n_paths, spec.y_dim)).astype(float)
        k = np.full(n_paths, s0.k, dtype=np.int64)
        return x, y, k
    x, y, k = s0
    x = np.asarray(x, dtype=float).reshape(n_paths, spec.dim)
    y = np.asarray(y, dtype=float).reshape(n_paths, spec.y_dim)
    return x, y, np.asarray(k, dtype=np.int64).reshape(n_paths)


def run_ensemble(spec: SystemSpec, s0, T: float, dt: float = DEFAULT_DT, n_paths: int = 1, *,
                 mode: str = "thinning", rng=None, kill_on_accept: bool = False,
                 save_times: Sequence[float] = (), integrands: Sequence[Callable] = (),
                 resolvent=None, occupation=None, record: bool = False,
                 max_events: int = MAX_EVENTS, block_size: int = BLOCK_SIZE,
                 workers: int = 1) -> EnsembleResult:
    """Simulate ``n_paths`` independent hybrid paths on ``[0, T]``.

    ``s0`` is a :class:`HybridState` shared by every path or an ``(x, y, k)``
    triple of per-path arrays. Paths are split into blocks of ``block_size``;
    block ``b`` draws from ``rng.child(b)`` and results are concatenated in
    block order, so the output does not depend on ``workers``.

    ``integrands`` are callables ``g(x, y, k)`` integrated along each path by
    the trapezoid rule. ``resolvent=(f, alpha, m)`` accumulates
    ``int exp(-alpha t) f dt`` split by the number of accepted switches so far
    (columns ``0..m``, the last one collecting everything beyond). With
    ``occupation=(binning, burn_in)`` the time spent in each cell after
    ``burn_in`` is accumulated.
    """
    if n_paths < 1:
        raise ConfigurationError("n_paths must be positive")
    if record and n_paths != 1:
        raise ConfigurationError("path recording needs n_paths=1")
    stream = as_stream(rng)
    grid = time_grid(T, dt, save_times)
    x, y, k = _broadcast_initial(spec, s0, n_paths)
    starts = list(range(0, n_paths, block_size))

    def one(b):
        lo = starts[b]
        hi = min(lo + block_size, n_paths)
        block = _Block(spec, x[lo:hi], y[lo:hi], k[lo:hi], mode, stream.child(b), kill_on_accept,
                       integrands, resolvent, occupation, record, max_events)
        return block.result(block.run(grid, save_times))

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, range(len(starts))))
    else:
        parts = [one(b) for b in range(len(starts))]
    return EnsembleResult.merge(parts)


# ----------------------------------------------------------------------------- trajectories


@dataclass
class Trajectory:
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    k: np.ndarray
    events: list[JumpRecord] = field(default_factory=list)
    weights: np.ndarray | None = None
    killed: bool = False
    kill_time: float | None = None

    def __len__(self):
        return self.times.size

    @property
    def states(self) -> list[HybridState]:
        return [HybridState(self.x[i], self.y[i], int(self.k[i])) for i in range(len(self))]

    @property
    def jumps(self) -> list[tuple[float, int, int]]:
        return [(e.time, e.source, e.target) for e in self.events if not e.phantom]

    @property
    def weight(self) -> float | None:
        return None if self.weights is None else float(self.weights[-1])

    @property
    def final_state(self) -> HybridState:
        return HybridState(self.x[-1], self.y[-1], int(self.k[-1]))

    def ndjson_lines(self, header: dict | None = None) -> list[str]:
        """Samples and jump records merged in time order (events precede same-time samples)."""
        lines = []
        if header is not None:
            lines.append(json.dumps(header, sort_keys=True))
        items = []
        for e in self.events:
            items.append((e.time, 0, {"t": e.time, "from": e.source, "to": e.target,
                                      "phantom": e.phantom}))
        for i in range(len(self)):
            rec = {"t": float(self.times[i]), "x": self.x[i].tolist(), "y": self.y[i].tolist(),
                   "k": int(self.k[i])}
            if self.weights is not None:
                rec["w"] = float(self.weights[i])
            items.append((float(self.times[i]), 1, rec))
        items.sort(key=lambda item: (item[0], item[1]))
        lines.extend(json.dumps(rec, sort_keys=True) for _, _, rec in items)
        if self.killed:
            lines.append(json.dumps({"t": self.kill_time, "killed": True}, sort_keys=True))
        return lines


def _trajectory(res: EnsembleResult, weighted: bool) -> Trajectory:
    rec = res.record
    killed = bool(np.isfinite(res.kill_time[0]))
    return Trajectory(times=rec["t"], x=rec["x"], y=rec["y"], k=rec["k"], events=rec["events"],
                      weights=rec["w"] if weighted else None, killed=killed,
                      kill_time=float(res.kill_time[0]) if killed else None)


def simulate_trajectory(spec: SystemSpec, s0: HybridState, T: float, dt: float = DEFAULT_DT,
                        mode: str = "thinning", rng=None) -> Trajectory:
    """One hybrid path recorded on the grid and at every accepted jump."""
    res = run_ensemble(spec, s0, T, dt, 1, mode=mode, rng=rng, record=True)
    return _trajectory(res, mode == "weighted")


def simulate_killed(spec: SystemSpec, z0, k: int, T: float, dt: float = DEFAULT_DT,
                    rng=None) -> Trajectory:
    """Regime-``k`` diffusion stopped at the first accepted switching event."""
    s0 = z0 if isinstance(z0, HybridState) else _split(spec, z0, k)
    s0 = HybridState(s0.x, s0.y, k)
    res = run_ensemble(spec, s0, T, dt, 1, rng=rng, record=True, kill_on_accept=True)
    return _trajectory(res, False)


def _split(spec, z, k):
    z = np.asarray(z, dtype=float).reshape(-1)
    return HybridState(z[:spec.dim], z[spec.dim:], k)


# ----------------------------------------------------------------------------- transitions


@dataclass(frozen=True)
class Target:
    """Axis-aligned box in phase space times one regime (``None`` = any regime).

    ``lo``/``hi`` bound the phase vector ``(x, y)``; ``None`` leaves it unbounded.
    """
    lo: tuple | None = None
    hi: tuple | None = None
    regime: int | None = None

    def contains(self, x, y, k) -> np.ndarray:
        z = np.concatenate([np.atleast_2d(x), np.asarray(y, dtype=float).reshape(np.shape(np.atleast_2d(x))[0], -1)], axis=1)
        inside = np.ones(z.shape[0], dtype=bool)
        if self.lo is not None:
            inside &= np.all(z >= np.asarray(self.lo, dtype=float), axis=1)
        if self.hi is not None:
            inside &= np.all(z <= np.asarray(self.hi, dtype=float), axis=1)
        if self.regime is not None:
            inside &= np.asarray(k) == self.regime
        return inside


@dataclass(frozen=True)
class TransitionEstimate:
    probability: float
    standard_error: float
    n_paths: int
    ess: float | None = None
    reliable: bool = True

    @property
    def interval(self) -> tuple[float, float]:
        return (max(0.0, self.probability - 3 * self.standard_error),
                min(1.0, self.probability + 3 * self.standard_error))


def mean_and_se(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n))


def estimate_transition(spec: SystemSpec, s0: HybridState, t: float, target: Target,
                        n_paths: int, dt: float = DEFAULT_DT, mode: str = "thinning",
                        rng=None, workers: int = 1) -> TransitionEstimate:
    if n_paths < 100:
        raise ConfigurationError("estimate_transition needs n_paths >= 100")
    if t == 0:
        hit = bool(target.contains(s0.x[None], s0.y[None], [s0.k])[0])
        return TransitionEstimate(float(hit), 0.0, n_paths)
    res = run_ensemble(spec, s0, t, min(dt, t), n_paths, mode=mode, rng=rng, workers=workers)
    fin = res.final
    ind = target.contains(fin.x, fin.y, fin.k).astype(float)
    if mode == "thinning":
        p = float(ind.mean())
        return TransitionEstimate(p, math.sqrt(p * (1 - p) / n_paths), n_paths)
    w = fin.weight
    p, se = mean_and_se(w * ind)
    sw, sw2 = float(w.sum()), float((w ** 2).sum())
    ess = sw * sw / sw2 if sw2 > 0 else 0.0
    return TransitionEstimate(min(max(p, 0.0), 1.0), se, n_paths, ess=ess, reliable=ess >= 10)


# ----------------------------------------------------------------------------- martingale tests


def values_at(f: TestFunction, snap: Snapshot, regimes) -> np.ndarray:
    return _eval_grouped(lambda x, y, r: np.asarray(f.value(x, y, r), dtype=float),
                         snap.x, snap.y, snap.k, regimes)


def _regimes(spec, s0):
    return tuple(spec.regimes) if spec.regimes else (s0.k,)


@dataclass(frozen=True)
class DynkinRow:
    h: float
    estimate: float
    standard_error: float
    generator: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return abs(self.estimate - self.generator) <= self.tolerance


def dynkin_test(spec: SystemSpec, f: TestFunction, s0: HybridState,
                hs: Sequence[float] = (1e-1, 1e-2, 1e-3), n_paths: int = 10_000,
                steps_per_h: int = 10, bias_constant: float = 10.0, rng=None,
                workers: int = 1) -> list[DynkinRow]:
    """Compare ``(E f(Z_h) - f(s0)) / h`` with the generator at ``s0``."""
    stream = as_stream(rng)
    gen = eval_generator(spec, f, s0)
    f0 = float(np.asarray(f.value(s0.x[None], s0.y[None], s0.k)).reshape(-1)[0])
    rows = []
    for i, h in enumerate(hs):
        res = run_ensemble(spec, s0, h, h / steps_per_h, n_paths, rng=stream.child(i),
                           workers=workers)
        est, se = mean_and_se((values_at(f, res.final, _regimes(spec, s0)) - f0) / h)
        rows.append(DynkinRow(h, est, se, gen, 3 * se + bias_constant * h))
    return rows


@dataclass(frozen=True)
class ResidualRow:
    t: float
    mean: float
    standard_error: float

    @property
    def passed(self) -> bool:
        return abs(self.mean) <= 3 * self.standard_error


def martingale_residual(spec: SystemSpec, f: TestFunction, s0: HybridState,
                        times: Sequence[float] = (0.5, 1.0), n_paths: int = 10_000,
                        dt: float = DEFAULT_DT, mode: str = "thinning", rng=None,
                        workers: int = 1) -> list[ResidualRow]:
    """Mean of ``f(Z_t) - f(s0) - int_0^t Af ds`` at each requested time."""
    times = sorted(float(t) for t in times)
    regimes = _regimes(spec, s0)
    eval_generator(spec, f, s0)  # validates noise and rates at the start point

    def af(x, y, r):
        return generator_batch(spec, f, x, y, r, validate=False)

    res = run_ensemble(spec, s0, times[-1], dt, n_paths, mode=mode, rng=rng, save_times=times,
                       integrands=[af], workers=workers)
    f0 = float(np.asarray(f.value(s0.x[None], s0.y[None], s0.k)).reshape(-1)[0])
    rows = []
    for t in times:
        snap = res.snapshots[_nearest(res.snapshots, t)]
        resid = values_at(f, snap, regimes) - f0 - snap.integrals[:, 0]
        if mode == "weighted":
            resid = resid * snap.weight
        mean, se = mean_and_se(resid)
        rows.append(ResidualRow(t, mean, se))
    return rows


def _nearest(snapshots, t):
    return min(snapshots, key=lambda s: abs(s - t))


def snapshot_at(res: EnsembleResult, t: float) -> Snapshot:
    return res.snapshots[_nearest(res.snapshots, t)]
