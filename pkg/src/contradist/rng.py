"""Deterministic counter-based random number generation.

Every sampling operation in this package draws from the SplitMix64 stream
implemented here instead of the platform RNG, so a (seed, call sequence)
pair reproduces the same values on any machine.  Output i of a stream is
``mix64(seed + (i + 1) * GOLDEN)`` where ``mix64`` is the standard
SplitMix64 finalizer; all arithmetic is modulo 2**64.  Gaussian variates
come from the Box-Muller transform applied to the uniform stream.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

# 53-bit mantissa step for mapping integers onto [0, 1)
_U53_SCALE = 2.0 ** -53


def _mix64_scalar(x: int) -> int:
    x &= _MASK64
    x ^= x >> 30
    x = (x * _MIX1) & _MASK64
    x ^= x >> 27
    x = (x * _MIX2) & _MASK64
    return x ^ (x >> 31)


def derive_seed(seed: int, tag: str) -> int:
    """Derive an independent child seed from a parent seed and a label.

    The tag is hashed with FNV-1a and mixed into the seed, so distinct
    purposes ("init", "shuffle/d0", ...) get decorrelated streams.
    """
    h = _FNV_OFFSET
    for byte in tag.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return _mix64_scalar((seed ^ h) + _GOLDEN)


class Rng:
    """Streaming SplitMix64 generator with vectorized draws."""

    def __init__(self, seed: int):
        self._seed = np.uint64(seed & _MASK64)
        self._counter = 0

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        z = self._seed + idx * np.uint64(_GOLDEN)
        z ^= z >> np.uint64(30)
        z *= np.uint64(_MIX1)
        z ^= z >> np.uint64(27)
        z *= np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def next_u64(self) -> int:
        """One raw 64-bit draw, e.g. to seed a child stream."""
        return int(self._raw(1)[0])

    def uniform(self, n: int) -> np.ndarray:
        """n doubles in [0, 1) with 53-bit resolution."""
        return (self._raw(n) >> np.uint64(11)).astype(np.float64) * _U53_SCALE

    def normal(self, n: int) -> np.ndarray:
        """n standard normal draws via Box-Muller."""
        m = (n + 1) // 2
        u1 = 1.0 - self.uniform(m)  # (0, 1]: keeps the log finite
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
        return z[:n]

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n) by sorting random keys."""
        return np.argsort(self._raw(n), kind="stable")
