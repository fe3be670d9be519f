"""Reproducible random streams.

Every trajectory block owns a :class:`RngStream`; regime draws, Brownian
increments and bridge refinements come from disjoint substreams so that two
simulation modes started from the same stream see the same grid-level
Brownian path.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BROWNIAN = 0
JUMPS = 1
BRIDGE = 2
AUX = 3


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream: int = 0
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if self.seed < 0 or self.stream < 0:
            raise ValueError("seed and stream must be non-negative")

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.stream, self.path + (int(index),))

    def generator(self, substream: int = AUX) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(self.stream,) + self.path + (int(substream),)
        )
        return np.random.Generator(np.random.Philox(ss))


def as_stream(rng) -> RngStream:
    """Accept an ``RngStream``, a plain integer seed, or ``None`` (seed 0)."""
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(0)
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError(f"cannot build an RngStream from {type(rng).__name__}")
