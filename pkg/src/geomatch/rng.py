"""Reproducible, splittable random streams.

Every generator in the package takes an :class:`RngSeed` rather than a numpy
``Generator`` so that a replicate can be re-created from two integers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngSeed:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "stream_id", int(self.stream_id) & _MASK64)

    def generator(self, *tags: int) -> np.random.Generator:
        """Philox generator for this stream; ``tags`` select independent substreams."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id, *tags))
        return np.random.Generator(np.random.Philox(ss))

    def replicate(self, r: int) -> "RngSeed":
        return RngSeed(self.seed, r)


def as_seed(rng: RngSeed | int) -> RngSeed:
    return rng if isinstance(rng, RngSeed) else RngSeed(int(rng))
