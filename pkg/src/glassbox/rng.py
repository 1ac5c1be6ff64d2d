"""Seeded, splittable random streams.

Every stochastic component in this package draws from an ``Rng``. The
generator is PCG64 (numpy's default bit generator), which has a fixed,
published algorithm and produces the same stream for the same seed on
every platform. Child streams are derived with ``SeedSequence.spawn``,
so splitting is deterministic too: the n-th child of seed s is always
the same stream.
"""

from __future__ import annotations

import numpy as np


class Rng:
    """Deterministic random stream wrapping ``numpy.random.Generator(PCG64)``."""

    def __init__(self, seed: int, _seq: np.random.SeedSequence | None = None):
        if _seq is None:
            _seq = np.random.SeedSequence(seed)
        self.seed = seed
        self._seq = _seq
        self._gen = np.random.Generator(np.random.PCG64(_seq))

    def split(self, n: int) -> list["Rng"]:
        """Derive ``n`` independent child streams. Deterministic in call order."""
        return [Rng(self.seed, _seq=child) for child in self._seq.spawn(n)]

    def normal(self, shape=None, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, size=shape)

    def uniform(self, shape=None, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def logistic(self, shape=None) -> np.ndarray:
        """Standard logistic noise, i.e. the difference of two Gumbel draws."""
        u = self._gen.uniform(1e-12, 1.0 - 1e-12, size=shape)
        return np.log(u) - np.log1p(-u)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed})"
