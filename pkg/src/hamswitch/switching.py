"""Exact sampling of the regime component by thinning a dominating chain.

The dominating chain jumps out of ``k`` at the constant total rate
``qhat_k = sum_l qhat_kl`` and proposes target ``l`` with probability
``qhat_kl / qhat_k``. In thinning mode a proposal at phase point ``z`` is
accepted with probability ``q_kl(z) / qhat_kl``; in weighted mode every
proposal is taken and a likelihood weight corrects the law.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DominationError
from .model import SystemSpec


@dataclass(frozen=True)
class ProposalCandidate:
    time: float
    target: int | None

    @property
    def is_event(self) -> bool:
        return self.target is not None


@dataclass(frozen=True)
class JumpProposal:
    time: float
    target: int
    accept_prob: float

    def __post_init__(self):
        if not 0.0 <= self.accept_prob <= 1.0:
            raise DominationError(f"acceptance probability {self.accept_prob} outside [0, 1]")


@dataclass(frozen=True)
class JumpRecord:
    time: float
    source: int
    target: int
    phantom: bool
    accept_prob: float = 1.0


@dataclass(frozen=True)
class LikelihoodWeight:
    value: float = 1.0

    def __post_init__(self):
        if not (self.value >= 0.0 and math.isfinite(self.value)):
            raise ValueError(f"likelihood weight must be finite and non-negative, got {self.value}")

    @property
    def degenerate(self) -> bool:
        return self.value == 0.0


def next_dominating_event(spec: SystemSpec, k: int, t_now: float,
                          rng: np.random.Generator) -> ProposalCandidate:
    row = spec.dominating(k)
    if row.total == 0:
        return ProposalCandidate(math.inf, None)
    wait = rng.standard_exponential() / row.total
    if row.targets.size == 1:
        target = int(row.targets[0])
    else:
        target = int(row.targets[np.searchsorted(row.cumulative, rng.random(), side="right")])
    return ProposalCandidate(t_now + wait, target)


def acceptance_probability(spec: SystemSpec, k: int, l: int, x, y) -> np.ndarray:
    """``q_kl(z) / qhat_kl`` at a batch of phase points (raises on domination breach)."""
    x = np.asarray(x, dtype=float)
    bound = float(spec.dominating(k).rate_of(l))
    if bound == 0:
        raise DominationError(f"proposal {k}->{l} outside the dominating support")
    rate = np.zeros(x.shape[:-1])
    for target, r in spec.rates(k, x, y, validate=True):
        if target == l:
            rate = rate + r
    g = rate / bound
    if np.any(g > 1 + 1e-12) or np.any(g < 0):
        raise DominationError(f"acceptance ratio for {k}->{l} outside [0, 1]")
    return np.clip(g, 0.0, 1.0)


def resolve_thinning(spec: SystemSpec, k: int, candidate: ProposalCandidate, x, y,
                     rng: np.random.Generator) -> tuple[bool, JumpProposal]:
    """Accept or reject one proposal given the phase state at the proposal time."""
    g = float(acceptance_probability(spec, k, candidate.target,
                                     np.atleast_2d(x), _rows(y, np.atleast_2d(x)))[0])
    proposal = JumpProposal(candidate.time, candidate.target, g)
    return bool(rng.random() < g), proposal


def _rows(y, x2):
    y = np.asarray(y, dtype=float)
    return y.reshape(x2.shape[0], -1)


def update_weight(w: LikelihoodWeight, jump_factor: float | None,
                  integral_correction: float) -> LikelihoodWeight:
    """Advance the weight across one inter-event segment.

    ``integral_correction`` is ``int (qhat_k - q_k(Z(s))) ds`` over the segment;
    ``jump_factor`` is the acceptance ratio ``g`` of the dominating jump that
    ends it (``None`` when the segment ends without a jump).
    """
    value = w.value * math.exp(integral_correction)
    if jump_factor is not None:
        value *= jump_factor
    return LikelihoodWeight(value)


def sample_dominating(spec: SystemSpec, k: np.ndarray, t_now: np.ndarray,
                      rng: np.random.Generator, regimes) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`next_dominating_event`; ``inf`` time marks absorbing regimes."""
    m = k.shape[0]
    e = rng.standard_exponential(m)
    u = rng.random(m)
    times = np.full(m, math.inf)
    targets = np.zeros(m, dtype=np.int64)
    for r in regimes:
        sel = k == r
        if not sel.any():
            continue
        row = spec.dominating(r)
        if row.total == 0:
            continue
        times[sel] = t_now[sel] + e[sel] / row.total
        if row.targets.size == 1:
            targets[sel] = row.targets[0]
        else:
            pick = np.searchsorted(row.cumulative, u[sel], side="right")
            targets[sel] = row.targets[np.minimum(pick, row.targets.size - 1)]
    return times, targets


def acceptance_batch(spec: SystemSpec, k: np.ndarray, l: np.ndarray, x: np.ndarray,
                     y: np.ndarray, regimes) -> np.ndarray:
    """Acceptance ratios for a batch of proposals with mixed source regimes."""
    g = np.zeros(k.shape[0])
    for r in regimes:
        sel = k == r
        if not sel.any():
            continue
        row = spec.dominating(r)
        xs, ys, ls = x[sel], y[sel], l[sel]
        rate = np.zeros(ls.shape[0])
        for target, q in spec.rates(r, xs, ys, validate=True):
            hit = ls == target
            rate[hit] = q[hit]
        g[sel] = rate / row.rate_of(ls)
    if np.any(g > 1 + 1e-12) or np.any(g < 0):
        raise DominationError("acceptance ratio outside [0, 1]")
    return np.clip(g, 0.0, 1.0)
