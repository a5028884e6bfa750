"""Splittable deterministic random streams.

Every random choice in the toolkit is drawn from a numpy ``Generator`` built
from a 64-bit seed that is a pure function of ``(master_seed, stream_index)``.
Batch items therefore see the same draws no matter which worker runs them or
in what order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix64(*parts: int) -> int:
    """Fold any number of integers into one well-mixed 64-bit value."""
    h = 0x6A09E667F3BCC908
    for p in parts:
        h = splitmix64(h ^ (int(p) & MASK64))
    return h


@dataclass(frozen=True)
class DeterministicRng:
    master_seed: int
    stream_index: int = 0

    @property
    def seed(self) -> int:
        return mix64(self.master_seed, self.stream_index)

    def generator(self) -> np.random.Generator:
        """A fresh generator; calling twice yields identical sequences."""
        return np.random.Generator(np.random.PCG64(self.seed))

    def child(self, *indices: int) -> "DeterministicRng":
        return DeterministicRng(self.seed, mix64(*indices))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, DeterministicRng):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return DeterministicRng(int(rng)).generator()
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")
