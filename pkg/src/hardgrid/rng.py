"""Counter-based pseudo-random streams for reproducible parallel Monte Carlo.

Every random quantity in this package is a pure function of a 64-bit stream
key and a draw counter, so independent chains, restarts and worker threads
never share generator state. A child stream derived from (key, index) is
bit-reproducible no matter how work is scheduled, which is what makes the
``--threads``-independence guarantees testable.

The generator is the SplitMix64 finalizer applied to ``key + (counter+1) *
golden``; child keys go through a second, different avalanche function so
in-stream counters and derivation indices cannot collide.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB
_DERIVE_SALT = 0xC2B2AE3D27D4EB4F
_DERIVE_A = 0x165667B19E3779F9
_DERIVE_B = 0x9FB21C651E98DF25

_INV_2_53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX_A) & MASK64
    z = ((z ^ (z >> 27)) * _MIX_B) & MASK64
    return z ^ (z >> 31)


def stream_u64(key: int, counter: int) -> int:
    """The ``counter``-th raw 64-bit draw of stream ``key``."""
    return mix64((key + ((counter + 1) * _GOLDEN)) & MASK64)


def stream_uniform(key: int, counter: int) -> float:
    """The ``counter``-th uniform double in [0, 1) of stream ``key``."""
    return (stream_u64(key, counter) >> 11) * _INV_2_53


def derive_key(key: int, index: int) -> int:
    """Key of the ``index``-th child stream of ``key``.

    Uses an avalanche distinct from :func:`mix64` so derived keys do not
    alias in-stream values.
    """
    z = (key ^ _DERIVE_SALT) & MASK64
    z = (z + ((index + 1) * _DERIVE_A)) & MASK64
    z = ((z ^ (z >> 29)) * _DERIVE_B) & MASK64
    return z ^ (z >> 32)


def derive_key_array(key: int, count: int, start: int = 0) -> np.ndarray:
    """Vectorized ``derive_key`` for indices ``start .. start+count-1``."""
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = (np.uint64(key) ^ np.uint64(_DERIVE_SALT)) + idx * np.uint64(_DERIVE_A)
    z = (z ^ (z >> np.uint64(29))) * np.uint64(_DERIVE_B)
    return z ^ (z >> np.uint64(32))


def stream_u64_array(key: int, start: int, count: int) -> np.ndarray:
    """Vectorized ``stream_u64`` for counters ``start .. start+count-1``."""
    c = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = np.uint64(key) + c * np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX_A)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX_B)
    return z ^ (z >> np.uint64(31))


def stream_uniform_array(key: int, start: int, count: int) -> np.ndarray:
    """Vectorized uniform doubles in [0, 1)."""
    return (stream_u64_array(key, start, count) >> np.uint64(11)) * _INV_2_53


class Stream:
    """Stateful convenience wrapper around a counter-based stream."""

    __slots__ = ("key", "counter")

    def __init__(self, key: int, counter: int = 0):
        self.key = key & MASK64
        self.counter = counter

    def u64(self) -> int:
        v = stream_u64(self.key, self.counter)
        self.counter += 1
        return v

    def uniform(self) -> float:
        return (self.u64() >> 11) * _INV_2_53

    def uniforms(self, count: int) -> np.ndarray:
        out = stream_uniform_array(self.key, self.counter, count)
        self.counter += count
        return out

    def below(self, n: int) -> int:
        """Integer in [0, n) via the fixed-point construction used in kernels."""
        return int(self.uniform() * n)

    def child(self, index: int) -> "Stream":
        return Stream(derive_key(self.key, index))

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n) driven by this stream."""
        perm = np.arange(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            j = int(self.uniform() * (i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm
