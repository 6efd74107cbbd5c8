"""Seeded random streams.

Every stochastic operation takes an explicit ``numpy.random.Generator``.
Streams are derived from one integer seed plus a tuple of string/int keys,
using the counter-based Philox bit generator, so two streams with different
keys never share state and a given (seed, keys) pair always replays.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key_to_int(key: int | str) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"stream keys must be nonnegative, got {key}")
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


def stream(seed: int, *keys: int | str) -> np.random.Generator:
    """Return the generator for ``(seed, *keys)``."""
    if seed is None:
        raise ValueError("a seed is mandatory")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
