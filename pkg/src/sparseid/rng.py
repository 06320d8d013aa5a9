"""Deterministic random numbers that are stable across platforms and versions.

The generator is xoshiro256** (Blackman & Vigna) seeded through splitmix64.
Both algorithms and all constants below are fixed; changing any of them would
change every simulated benchmark instance.

Seeding scheme
--------------
Every stream is identified by a tuple of non-negative integers, e.g.
``(root, trial)`` for a benchmark instance or ``(root, trial, snr_key, state)``
for a noise draw.  :func:`derive_seed` folds the tuple into one 64-bit word:

    h = splitmix64(root)
    for k in keys: h = splitmix64(h ^ splitmix64(k + STREAM_SALT))

so adding keys (for example a new SNR point) never perturbs existing streams.

Variates
--------
* uniform on [0, 1): ``(next() >> 11) * 2**-53``
* uniform on the open interval (0, 1): ``((next() >> 11) + 0.5) * 2**-53``
* standard normal: Box-Muller on two open-interval uniforms, using both outputs
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
STREAM_SALT = 0xD1B54A32D192ED03
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_TWO_53 = 1.0 / (1 << 53)


def splitmix64(x: int) -> int:
    """Return the splitmix64 finaliser of ``x + GOLDEN_GAMMA``."""
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def derive_seed(root: int, *keys: int) -> int:
    """Fold ``root`` and integer ``keys`` into a single 64-bit seed."""
    h = splitmix64(int(root) & MASK64)
    for k in keys:
        h = splitmix64(h ^ splitmix64((int(k) + STREAM_SALT) & MASK64))
    return h


def snr_key(snr_db: float) -> int:
    """Integer key for an SNR value (milli-dB, offset to stay non-negative)."""
    return int(round(float(snr_db) * 1000.0)) + (1 << 32)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    """xoshiro256** generator with a small numpy-returning API.

    Parameters
    ----------
    seed : int
        Any integer; expanded to the 256-bit state with splitmix64.
    """

    def __init__(self, seed: int):
        s = int(seed) & MASK64
        state = []
        for _ in range(4):
            state.append(splitmix64(s))
            s = (s + GOLDEN_GAMMA) & MASK64
        if not any(state):
            state[0] = 1
        self._s = state

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self, size: int | None = None):
        """Uniform variates on [0, 1)."""
        if size is None:
            return (self.next_u64() >> 11) * _TWO_53
        return np.array([(self.next_u64() >> 11) * _TWO_53 for _ in range(int(size))])

    def _open01(self) -> float:
        return ((self.next_u64() >> 11) + 0.5) * _TWO_53

    def uniform_open(self, low: float, high: float, size: int) -> np.ndarray:
        """Uniform variates on the open interval (low, high)."""
        u = np.array([self._open01() for _ in range(int(size))])
        return low + (high - low) * u

    def uniform(self, low: float, high: float, size: int) -> np.ndarray:
        """Uniform variates on [low, high)."""
        return low + (high - low) * self.random(size)

    def normal(self, size: int, scale: float = 1.0) -> np.ndarray:
        """Gaussian variates with mean 0 and standard deviation ``scale``."""
        n = int(size)
        out = np.empty(n)
        i = 0
        while i < n:
            r = math.sqrt(-2.0 * math.log(self._open01()))
            theta = 2.0 * math.pi * self._open01()
            out[i] = r * math.cos(theta)
            if i + 1 < n:
                out[i + 1] = r * math.sin(theta)
            i += 2
        return scale * out

    def choice(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct integers from ``range(n)`` (partial Fisher-Yates)."""
        if not 0 <= k <= n:
            raise ValueError("need 0 <= k <= n")
        pool = list(range(n))
        for i in range(k):
            j = i + self.next_u64() % (n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return np.array(pool[:k], dtype=np.int64)
