"""Counter-based reproducible random numbers.

A splitmix64 finalizer applied to (seed + (counter+1) * GOLDEN) gives a
stateless, vectorizable generator: output i depends only on (seed, i), so
fields are reproducible across platforms and languages from the documented
constants alone. Gaussians come from Box-Muller over consecutive counter
pairs.
"""
from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)

_U64_SCALE = 2.0 ** -53


def splitmix64(seed: int, counters: np.ndarray) -> np.ndarray:
    """Raw 64-bit outputs for the given counters (uint64 array)."""
    with np.errstate(over="ignore"):
        z = (np.uint64(seed) + (counters.astype(np.uint64) + np.uint64(1)) * GOLDEN).astype(
            np.uint64
        )
        z = (z ^ (z >> np.uint64(30))) * MIX1
        z = (z ^ (z >> np.uint64(27))) * MIX2
        return z ^ (z >> np.uint64(31))


def uniform01(seed: int, counters: np.ndarray) -> np.ndarray:
    """Uniforms in (0, 1]: ((x >> 11) + 1) * 2^-53."""
    x = splitmix64(seed, counters)
    return ((x >> np.uint64(11)).astype(np.float64) + 1.0) * _U64_SCALE


def gaussians(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """n standard normals; gaussian i uses counters (2i, 2i+1) + 2*offset.

    Box-Muller: z = sqrt(-2 ln u1) * cos(2 pi u2).
    """
    idx = np.arange(n, dtype=np.uint64) + np.uint64(offset)
    u1 = uniform01(seed, idx * np.uint64(2))
    u2 = uniform01(seed, idx * np.uint64(2) + np.uint64(1))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def gaussian_field(width: int, height: int, seed: int) -> np.ndarray:
    """(height, width) standard-normal field, row-major counter order."""
    return gaussians(seed, width * height).reshape(height, width)
