"""Counter-based pseudorandomness shared by the sketch structures.

All randomized structures in this package that must be reproducible
byte-for-byte across runs and platforms (measurement matrices,
Count-Sketch hash rows) draw from a SplitMix64-style counter PRF keyed
by ``(seed, stream, counter)``.  Distinct streams are independent, so a
structure can be regenerated column by column in any order, which is
what makes lazy or parallel construction safe.

Everything here operates on ``np.uint64`` with wrapping arithmetic.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_STEP = np.uint64(0xD1342543DE82EF95)

_U64 = np.uint64


def mix64(z):
    """SplitMix64 finalizer: a 64-bit bijection with full avalanche."""
    z = np.asarray(z, dtype=_U64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U64(30))) * _MIX1
        z = (z ^ (z >> _U64(27))) * _MIX2
        return z ^ (z >> _U64(31))


def stream_key(seed: int, stream) -> np.ndarray:
    """Per-stream base key derived from the master seed."""
    s = np.asarray(stream, dtype=_U64)
    with np.errstate(over="ignore"):
        return mix64(_U64(seed & 0xFFFFFFFFFFFFFFFF) + _GOLDEN * (s + _U64(1)))


def prf64(key, counter) -> np.ndarray:
    """64-bit PRF output for each (key, counter) pair (broadcasting)."""
    key = np.asarray(key, dtype=_U64)
    c = np.asarray(counter, dtype=_U64)
    with np.errstate(over="ignore"):
        return mix64(key ^ (c * _STEP + _GOLDEN))


def prf_mod(key, counter, bound) -> np.ndarray:
    """PRF output reduced to [0, bound).

    Plain modular reduction; the bias is bound/2**64, far below anything
    an empirical test can see.
    """
    return prf64(key, counter) % _U64(bound)


def prf_sign(key, counter) -> np.ndarray:
    """Fair +/-1 coin per (key, counter), from the PRF's top bit."""
    bit = prf64(key, counter) >> _U64(63)
    return (1 - 2 * bit.astype(np.int64)).astype(np.int8)


def box_muller(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normal variates via the Box-Muller transform.

    Used instead of the generator's native normal sampler so that stored
    Gaussian projectors depend only on the uniform stream.
    """
    size = int(np.prod(shape)) if shape else 1
    half = (size + 1) // 2
    u1 = rng.random(half)
    u2 = rng.random(half)
    # Guard against log(0); rng.random() is in [0, 1).
    r = np.sqrt(-2.0 * np.log1p(-u1))
    theta = 2.0 * np.pi * u2
    z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:size]
    return z.reshape(shape)
