"""Deterministic pseudo-randomness for every stochastic step in the toolkit.

All randomness flows from splitmix64 so that datasets, weight draws, shuffles
and augmentations are bit-reproducible across runs, platforms and thread
schedules. The scalar generator works on Python ints (exact 64-bit wrap);
bulk draws use a counter-based vectorized form of the same mixer.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """The splitmix64 output mixer applied to a single 64-bit value."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *indices: int) -> int:
    """Fold indices into a seed to get an independent substream seed."""
    s = seed & MASK64
    for idx in indices:
        s = mix64((s + _GAMMA + (idx & MASK64)) & MASK64)
    return s


class SplitMix64:
    """Sequential splitmix64 generator.

    state_{k+1} = state_k + 0x9E3779B97F4A7C15 (mod 2^64); output = mix(state).
    """

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & MASK64
        return mix64(self.state)

    def next_float(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0**-53

    def next_below(self, n: int) -> int:
        """Uniform-ish integer in [0, n) via modulo (bias < n/2^64, negligible)."""
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates: for i = len-1 .. 1, swap i with next_below(i+1)."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        perm = list(range(n))
        self.shuffle(perm)
        return perm


def u64_stream(seed: int, count: int) -> np.ndarray:
    """The first `count` outputs of SplitMix64(seed), computed vectorized.

    Output k equals mix(seed + (k+1)*GAMMA), identical to the scalar class.
    """
    with np.errstate(over="ignore"):
        k = np.arange(1, count + 1, dtype=np.uint64)
        z = np.uint64(seed & MASK64) + k * np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))


def uniform_stream(seed: int, count: int) -> np.ndarray:
    """Uniform doubles in [0, 1), matching SplitMix64.next_float draw-for-draw."""
    return (u64_stream(seed, count) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def gaussian_stream(seed: int, count: int) -> np.ndarray:
    """Standard normals via Box-Muller over consecutive splitmix64 pairs.

    Pair (u1, u2) yields sqrt(-2 ln u1')*cos(2 pi u2) and the sin twin,
    with u1' shifted into (0, 1] so the log is finite.
    """
    pairs = (count + 1) // 2
    u = u64_stream(seed, 2 * pairs)
    u1 = ((u[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    u2 = (u[1::2] >> np.uint64(11)).astype(np.float64) * 2.0**-53
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(2 * pairs, dtype=np.float64)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:count]


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash; used for stable run-manifest digests."""
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & MASK64
    return h
