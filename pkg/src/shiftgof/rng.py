"""Counter-based normal variates.

Every draw is a pure function of ``(seed, index, stream, position)``: a Philox
generator is keyed by ``(seed, index)`` and the stream number occupies the
high word of the starting counter, so substreams never overlap. Normals are
produced by the inverse CDF so that a single uniform maps to a single normal.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1


def _bit_generator(seed: int, index: int, stream: int) -> np.random.Philox:
    key = np.array([seed & _MASK64, index & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, 0, stream & _MASK64], dtype=np.uint64)
    return np.random.Philox(key=key, counter=counter)


def uniforms(seed: int, index: int, n: int, stream: int = 0) -> np.ndarray:
    """``n`` uniforms on the open interval (0, 1)."""
    raw = _bit_generator(seed, index, stream).random_raw(n)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def normals(seed: int, index: int, n: int, stream: int = 0) -> np.ndarray:
    return ndtri(uniforms(seed, index, n, stream))


def derive_seed(seed: int, *keys: int) -> int:
    """A 64-bit seed derived deterministically from ``seed`` and integer keys."""
    ss = np.random.SeedSequence(seed & _MASK64, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
