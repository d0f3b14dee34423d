"""Counter-mode SplitMix64 streams.

Every random draw in the package comes from this generator so that initial
weights, synthetic datasets, and simulated delays are all reconstructible
from integer seeds alone. A stream is identified by (seed, tag); its i-th
output is

    mix(base + (i + 1) * GOLD),   base = mix((seed * SEEDC) ^ (tag * TAGC))

where mix is the SplitMix64 finalizer and all arithmetic is modulo 2**64.
The counter form has no sequential dependency, so the scalar and vectorized
implementations below produce identical streams by construction.
"""

from __future__ import annotations

import numpy as np

MASK = (1 << 64) - 1
GOLD = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
SEEDC = 0xA24BAED4963EE407
TAGC = 0xD1B54A32D192ED03

_U53_INV = 2.0**-53


def mix64(z: int) -> int:
    z &= MASK
    z = ((z ^ (z >> 30)) * MIX1) & MASK
    z = ((z ^ (z >> 27)) * MIX2) & MASK
    return (z ^ (z >> 31)) & MASK


def stream_base(seed: int, tag: int) -> int:
    return mix64(((seed & MASK) * SEEDC & MASK) ^ ((tag & MASK) * TAGC & MASK))


def uint64_stream(seed: int, tag: int, n: int) -> np.ndarray:
    """First n outputs of stream (seed, tag) as a uint64 array."""
    base = np.uint64(stream_base(seed, tag))
    z = base + np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GOLD)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


def uniform_stream(seed: int, tag: int, n: int) -> np.ndarray:
    """n float64 values in [0, 1): the top 53 bits of each uint64 output."""
    return (uint64_stream(seed, tag, n) >> np.uint64(11)).astype(np.float64) * _U53_INV


class CounterRng:
    """Scalar view of one stream, for draws made one at a time."""

    def __init__(self, seed: int, tag: int):
        self._base = stream_base(seed, tag)
        self._i = 0

    def next_u64(self) -> int:
        self._i += 1
        return mix64((self._base + self._i * GOLD) & MASK)

    def next_uniform(self) -> float:
        return (self.next_u64() >> 11) * _U53_INV

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi]; modulo bias is negligible at u64 width."""
        if hi < lo:
            raise ValueError("empty range")
        return lo + self.next_u64() % (hi - lo + 1)

    def next_bytes(self, n: int) -> bytes:
        out = bytearray()
        while len(out) < n:
            out += self.next_u64().to_bytes(8, "little")
        return bytes(out[:n])
