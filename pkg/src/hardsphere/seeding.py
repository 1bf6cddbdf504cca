"""Deterministic RNG stream derivation.

A single 64-bit master seed is split into independent substreams with a
counter-based key, so replicate k of task j always sees the same stream
regardless of thread count or execution order.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def spawn_rng(seed: int, *key: int) -> np.random.Generator:
    """Return a PCG64 generator for substream ``key`` of ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
