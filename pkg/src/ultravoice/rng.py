"""SplitMix64, vectorized.

The generator is counter based: the i-th output of a stream with state ``s``
is ``mix(s + i * GOLDEN)``, with the finalizer constants of Steele, Lea and
Flood's SplitMix64. Outputs are therefore identical on every platform, and a
child stream is seeded from one output of its parent.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * MIX1
    z = (z ^ (z >> np.uint64(27))) * MIX2
    return z ^ (z >> np.uint64(31))


def hash_words(*words: int) -> int:
    """Fold integers into one 64-bit seed."""
    acc = np.array([0x6A09E667F3BCC908], dtype=np.uint64)
    with np.errstate(over="ignore"):
        for w in words:
            acc = _mix(acc ^ np.array([int(w) & _MASK], dtype=np.uint64)) + GOLDEN
    return int(acc[0])


class SplitMix64:
    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next_u64(self, n: int) -> np.ndarray:
        i = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            out = _mix(np.uint64(self.state) + i * GOLDEN)
        self.state = (self.state + n * int(GOLDEN)) & _MASK
        return out

    def split(self) -> "SplitMix64":
        return SplitMix64(int(self.next_u64(1)[0]))

    def uniform(self, n: int | None = None, low: float = 0.0, high: float = 1.0):
        """Floats in [low, high) built from the top 53 bits."""
        k = 1 if n is None else n
        u = (self.next_u64(k) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        u = low + (high - low) * u
        return float(u[0]) if n is None else u

    def normal(self, n: int) -> np.ndarray:
        """Box-Muller standard normals."""
        half = (n + 1) // 2
        u1 = 1.0 - self.uniform(half)  # (0, 1]
        u2 = self.uniform(half)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return z[:n]

    def integers(self, n: int, high: int) -> np.ndarray:
        return (self.uniform(n) * high).astype(np.int64)
