"""Pinned, portable random streams.

xorshift64* (shifts 12/25/27, multiplier 0x2545F4914F6CDD1D) seeded through
splitmix64, with Box-Muller Gaussians.  Everything is integer arithmetic
plus ``log``/``sqrt``/``cos``/``sin``, so other languages can reproduce the
streams exactly.
"""
from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_STAR = 0x2545F4914F6CDD1D
_TWO_POW_M53 = 1.0 / (1 << 53)


def splitmix64(x):
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class XorShift64Star:
    """Stream ``stream`` of generator ``seed``; streams are independent."""

    def __init__(self, seed, stream=0):
        state = splitmix64((splitmix64(seed & MASK64) ^ (stream & MASK64)) & MASK64)
        self.state = state or _GOLDEN
        self._spare = None

    def next_u64(self):
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * _STAR) & MASK64

    def uniform(self):
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * _TWO_POW_M53

    def uniform_open0(self):
        """Uniform in (0, 1]."""
        return ((self.next_u64() >> 11) + 1) * _TWO_POW_M53

    def below(self, n):
        """Integer in [0, n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        return ((self.next_u64() >> 11) * n) >> 53

    def normal(self):
        """Standard normal; Box-Muller pairs, cosine branch first."""
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = self.uniform_open0()
        u2 = self.uniform()
        rad = math.sqrt(-2.0 * math.log(u1))
        ang = 2.0 * math.pi * u2
        self._spare = rad * math.sin(ang)
        return rad * math.cos(ang)

    def permutation(self, n):
        """Fisher-Yates shuffle of ``range(n)``."""
        p = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            p[i], p[j] = p[j], p[i]
        return p
