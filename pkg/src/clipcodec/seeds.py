"""Seed derivation: every random draw in a run flows from one 64-bit seed."""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1

# Stream tags keep unrelated consumers of the same model seed independent.
STREAM_INIT = 0x9E3779B97F4A7C15
STREAM_NOISE = 0xD1B54A32D192ED03


def splitmix64(x: int) -> int:
    """One step of the splitmix64 mixer (well-distributed, invertible)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return (x ^ (x >> 31)) & _MASK


def model_seed(global_seed: int, model_index: int) -> int:
    """Deterministic per-model seed; decoders derive the same value."""
    return splitmix64((global_seed & _MASK) ^ splitmix64(model_index + 1))


def make_rng(seed: int, stream: int = STREAM_INIT) -> np.random.Generator:
    """PCG64 generator on a derived stream (platform-independent output)."""
    return np.random.Generator(np.random.PCG64(splitmix64((seed ^ stream)
                                                          & _MASK)))
