"""Deterministic randomness for everything in this package.

The generator is SplitMix64: a 64-bit counter stream pushed through a
finalizer. Because the i-th state is just ``seed + (i+1) * GOLDEN`` mod 2^64,
bulk output can be produced vectorized in numpy while staying bit-identical
to the sequential path.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a single 64-bit value (pure Python ints)."""
    z = x & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # uint64 array ops wrap mod 2^64 silently, which is exactly what we want
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_MIX1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & MASK64
    return h


def derive_seed(base: int, label: str) -> int:
    """Child seed for an independent stream, stable across runs and platforms."""
    return mix64((base & MASK64) ^ fnv1a64(label.encode("utf-8")))


class SeededRng:
    """SplitMix64 stream.

    state advances by GOLDEN before each output; output = mix64(state).
    Seed 0 must yield 0xE220A8397B1DCDAF first (reference vector).
    """

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self._state = self.seed

    def next_u64(self) -> int:
        self._state = (self._state + GOLDEN) & MASK64
        return mix64(self._state)

    def next_block(self, count: int) -> np.ndarray:
        """The next `count` outputs as a uint64 array (vectorized, same stream)."""
        if count < 0:
            raise ValueError("count must be >= 0")
        if count == 0:
            return np.empty(0, dtype=np.uint64)
        steps = np.arange(1, count + 1, dtype=np.uint64) * np.uint64(GOLDEN)
        out = _mix64_array(np.uint64(self._state) + steps)
        self._state = (self._state + count * GOLDEN) & MASK64
        return out

    def bounded(self, n: int) -> int:
        """Uniform draw from [0, n) by bounded rejection.

        Words >= floor(2^64 / n) * n are rejected, the rest reduced mod n,
        so every residue is exactly equally likely.
        """
        if n <= 0:
            raise ValueError("n must be positive")
        limit = ((1 << 64) // n) * n
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def uniform_block(self, count: int) -> np.ndarray:
        """float64 uniforms in (0, 1], 53-bit resolution."""
        words = self.next_block(count)
        return ((words >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53

    def gaussian_block(self, count: int) -> np.ndarray:
        """Standard normals via Box-Muller on the stream (float64).

        Word pairs (u1, u2) produce (z0, z1) interleaved; an odd count drops
        the final z1. u1 lies in (0, 1] so log never sees zero.
        """
        if count == 0:
            return np.empty(0, dtype=np.float64)
        pairs = (count + 1) // 2
        u = self.uniform_block(2 * pairs)
        u1, u2 = u[0::2], u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * math.pi) * u2
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:count]


def words_at(seed: int, indices: np.ndarray) -> np.ndarray:
    """Random access into the stream for `seed`: word j = mix64(seed + (j+1)*GOLDEN).

    `indices` is any uint64 array of word positions; output has its shape.
    Chip generation leans on this to pull scattered stream ranges in one call.
    """
    idx = np.asarray(indices, dtype=np.uint64) + np.uint64(1)
    return _mix64_array(np.uint64(seed & MASK64) + idx * np.uint64(GOLDEN))


def rademacher_words_block(seed: int, word_start: int, count: int) -> np.ndarray:
    """Words [word_start, word_start+count) of the stream for `seed`.

    Counter-based random access used by the spread-spectrum chip generator;
    identical to the j-th sequential outputs of SeededRng(seed).
    """
    return words_at(seed, np.arange(word_start, word_start + count, dtype=np.uint64))
