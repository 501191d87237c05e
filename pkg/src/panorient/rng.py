"""Deterministic pseudo-randomness built on the splitmix64 sequence.

Every random draw in this project (scene generation, moment jitter, photometric
noise, weight init, epoch shuffles) flows through this module so that datasets
and training runs are bit-reproducible from integer seeds alone. splitmix64 is
counter-based, which also gives us cheap vectorised streams in numpy.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(x: int) -> int:
    """splitmix64 finaliser: one 64-bit avalanche step."""
    z = x & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def _tag_to_int(tag) -> int:
    if isinstance(tag, str):
        # FNV-1a, 64 bit: stable across runs and platforms.
        h = 0xCBF29CE484222325
        for b in tag.encode("utf-8"):
            h = ((h ^ b) * 0x100000001B3) & _MASK64
        return h
    return int(tag) & _MASK64


def derive_seed(seed: int, *tags) -> int:
    """Derive a child seed from a parent seed and an ordered tag path.

    Order-sensitive: derive_seed(s, a, b) != derive_seed(s, b, a) in general.
    """
    s = seed & _MASK64
    for tag in tags:
        s = mix64((s + _GOLDEN + mix64(_tag_to_int(tag))) & _MASK64)
    return s


class SplitMix64:
    """Sequential splitmix64 stream with float and Gaussian helpers."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return mix64(self._state)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        # 53-bit mantissa, value in [lo, hi).
        u = (self.next_u64() >> 11) * (2.0 ** -53)
        return lo + (hi - lo) * u

    def randint(self, n: int) -> int:
        """Integer in [0, n) by rejection (unbiased)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = _MASK64 - (_MASK64 % n)
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        # Box-Muller; caches the second variate of each pair.
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
        else:
            u1 = ((self.next_u64() >> 11) + 1) * (2.0 ** -53)  # (0, 1]
            u2 = (self.next_u64() >> 11) * (2.0 ** -53)
            r = math.sqrt(-2.0 * math.log(u1))
            z = r * math.cos(2.0 * math.pi * u2)
            self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return mu + sigma * z

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]


def uniform_array(seed: int, n: int) -> np.ndarray:
    """Vectorised stream of n uniforms in [0, 1).

    Matches the scalar stream: element i equals the i-th SplitMix64(seed)
    uniform draw (when no other draw types interleave).
    """
    idx = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed) + idx * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def normal_array(seed: int, n: int, sigma: float = 1.0) -> np.ndarray:
    """Vectorised stream of n Gaussians via Box-Muller on splitmix64."""
    m = (n + 1) // 2
    u = uniform_array(seed, 2 * m)
    u1 = u[0::2] + 2.0 ** -53  # shift into (0, 1]
    u2 = u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    out = np.empty(2 * m, dtype=np.float64)
    out[0::2] = r * np.cos(2.0 * np.pi * u2)
    out[1::2] = r * np.sin(2.0 * np.pi * u2)
    return sigma * out[:n]
