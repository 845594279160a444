"""Deterministic random streams based on the SplitMix64 generator.

SplitMix64 is counter-based: output ``i`` of a stream with key ``k`` is
``mix64(k + i * GOLDEN)`` where ``mix64`` is the standard SplitMix64
finalizer and ``GOLDEN = 0x9E3779B97F4A7C15``.  This makes draws
vectorizable and makes every stream a pure function of its key, which is
what the generators and the benchmark orchestrator rely on for
reproducibility.

Stream splitting rule: ``derive(seed, *tags)`` folds each tag (strings are
hashed with 64-bit FNV-1a, integers are used directly) into the key as

    key <- mix64((key + GOLDEN) ^ tag_code)

so every (seed, purpose) pair gets an independent stream.  Integer draws
use modulo reduction; the bias is below range/2^64 and irrelevant at the
ranges used here.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

_U = np.uint64


def mix64(value: int) -> int:
    """SplitMix64 finalizer on a Python integer (mod 2^64)."""
    z = value & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U(30))) * _U(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U(27))) * _U(0x94D049BB133111EB)
    return z ^ (z >> _U(31))


def _fnv1a(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK
    return h


def derive_key(seed: int, *tags) -> int:
    """Key for the substream identified by (seed, tags)."""
    key = mix64((seed & _MASK) ^ _GOLDEN)
    for tag in tags:
        if isinstance(tag, str):
            code = _fnv1a(tag.encode("utf-8"))
        else:
            code = int(tag) & _MASK
        key = mix64((key + _GOLDEN) ^ code)
    return key


class Stream:
    """A counter-based SplitMix64 stream of random draws."""

    def __init__(self, key: int):
        self.key = key & _MASK
        self.counter = 0

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        return _mix_array(_U(self.key) + idx * _U(_GOLDEN))

    def u64(self, n: int) -> np.ndarray:
        return self._raw(n)

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Doubles in [low, high) with 53-bit resolution."""
        u = (self._raw(n) >> _U(11)).astype(np.float64) * 2.0**-53
        return low + (high - low) * u

    def normal(self, n: int) -> np.ndarray:
        """Standard normals via Box-Muller (cosine branch only)."""
        u1 = ((self._raw(n) >> _U(11)).astype(np.float64) + 1.0) * 2.0**-53
        u2 = (self._raw(n) >> _U(11)).astype(np.float64) * 2.0**-53
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def integers(self, low: int, high: int, n: int) -> np.ndarray:
        """Integers in [low, high] inclusive (modulo reduction)."""
        span = _U(high - low + 1)
        return (low + (self._raw(n) % span).astype(np.int64)).astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        perm = np.arange(n)
        if n < 2:
            return perm
        raw = self._raw(n - 1)
        for i in range(n - 1, 0, -1):
            j = int(raw[n - 1 - i] % _U(i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def choice(self, weights: np.ndarray, n: int) -> np.ndarray:
        """Indices drawn from a discrete distribution by inverse CDF."""
        cdf = np.cumsum(np.asarray(weights, dtype=np.float64))
        cdf /= cdf[-1]
        u = self.uniform(n)
        return np.searchsorted(cdf, u, side="right").clip(0, len(cdf) - 1)


def stream(seed: int, *tags) -> Stream:
    """Stream for the substream identified by (seed, tags)."""
    return Stream(derive_key(seed, *tags))


def subseed(seed: int, *tags) -> int:
    """Integer seed derived from (seed, tags), for APIs that take seeds."""
    return derive_key(seed, *tags)
