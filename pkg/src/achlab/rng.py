"""Counter-based SplitMix64 stream.

Every random draw in the package is derived from one 64-bit seed so that
other implementations can reproduce the streams bit for bit.  Output ``i``
(counting from 0) of the stream with seed ``s`` is::

    z = (s + (i + 1) * 0x9E3779B97F4A7C15) mod 2**64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
    out = z ^ (z >> 31)

which equals the classic sequential SplitMix64 generator started at ``s``.
Uniform doubles are ``(out >> 11) * 2**-53`` in [0, 1).  Substreams are
keyed by ``SplitMix64(seed).child(k)``, whose seed is output ``k`` of the
parent stream.
"""

from __future__ import annotations

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
MASK64 = (1 << 64) - 1


def splitmix64(seed: int, counters: np.ndarray) -> np.ndarray:
    """Return SplitMix64 outputs for the given counter values (uint64)."""
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & MASK64) + (c + np.uint64(1)) * np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Stateful wrapper that hands out consecutive blocks of the stream."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self.counter = 0

    def next_u64(self, size: int) -> np.ndarray:
        out = splitmix64(self.seed, np.arange(self.counter, self.counter + size, dtype=np.uint64))
        self.counter += size
        return out

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        u = (self.next_u64(count) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        u = low + (high - low) * u
        return float(u[0]) if size is None else u.reshape(shape)

    def normal(self, size=None):
        """Box-Muller normals built from two uniforms per draw."""
        shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        u1 = self.uniform(count)
        u2 = self.uniform(count)
        z = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
        return float(z[0]) if size is None else z.reshape(shape)

    def child(self, key: int) -> "SplitMix64":
        return SplitMix64(int(splitmix64(self.seed, np.array([key], dtype=np.uint64))[0]))
