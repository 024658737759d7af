"""Deterministic random number generation.

Every stochastic choice in the package (parameter init, dropout masks,
shuffling, splits) draws from a SeededRng, and independent purposes get
independent substreams derived by name.  Substream derivation hashes the
parent seed together with the key strings, so the stream one component
sees never depends on how many draws another component made first, and
the mapping is stable across platforms and processes.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _mix(seed: int, keys) -> int:
    h = hashlib.sha256()
    h.update(str(seed).encode("utf-8"))
    for key in keys:
        h.update(b"/")
        h.update(str(key).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


class SeededRng:
    """PCG64 generator with named, hash-derived substreams."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def derive(self, *keys) -> "SeededRng":
        """A generator fully determined by this seed and the key strings."""
        if not keys:
            raise ValueError("derive needs at least one key")
        return SeededRng(_mix(self.seed, keys))

    def uniform(self, low: float, high: float, shape=None) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def normal(self, scale: float = 1.0, shape=None) -> np.ndarray:
        return self._gen.normal(0.0, scale, shape)

    def integers(self, low, high, shape=None):
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def shuffle_copy(self, items: list) -> list:
        """A shuffled copy of the list; the input is left alone."""
        return [items[int(i)] for i in self._gen.permutation(len(items))]
