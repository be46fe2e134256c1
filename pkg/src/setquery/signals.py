"""Signal representations and synthetic signal generators.

A signal is either a dense ``np.ndarray`` of length ``n`` or a
``SparseSignal`` holding (index, value) pairs with distinct indices.
Every function in the package that takes a signal accepts both forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SparseSignal:
    """Sparse vector: distinct indices into [0, n) with real values."""

    n: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.indices.shape != self.values.shape or self.indices.ndim != 1:
            raise ValueError("indices and values must be 1-d and equal length")
        if len(np.unique(self.indices)) != len(self.indices):
            raise ValueError("sparse signal indices must be distinct")
        if len(self.indices) and (
            self.indices.min() < 0 or self.indices.max() >= self.n
        ):
            raise ValueError("sparse signal index out of range")

    @classmethod
    def from_dense(cls, x: np.ndarray) -> "SparseSignal":
        x = np.asarray(x, dtype=np.float64)
        idx = np.flatnonzero(x)
        return cls(len(x), idx, x[idx])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.n)
        out[self.indices] = self.values
        return out

    @property
    def nnz(self) -> int:
        return len(self.indices)


Signal = "np.ndarray | SparseSignal"


def as_dense(signal, n: int | None = None) -> np.ndarray:
    if isinstance(signal, SparseSignal):
        if n is not None and signal.n != n:
            raise ValueError(f"signal has dimension {signal.n}, expected {n}")
        return signal.to_dense()
    x = np.asarray(signal, dtype=np.float64)
    if n is not None and x.shape != (n,):
        raise ValueError(f"signal has shape {x.shape}, expected ({n},)")
    return x


def err_topk(x, k: int, ord: int = 2) -> float:
    """Norm of the tail after removing the k largest-magnitude entries.

    This is the exact minimum of ||x - z|| over all k-sparse z, the
    baseline that recovery error bounds are stated against.
    """
    x = as_dense(x)
    if k >= len(x):
        return 0.0
    mags = np.abs(x)
    tail = np.partition(mags, len(x) - k)[: len(x) - k] if k > 0 else mags
    if ord == 2:
        return float(np.sqrt(np.sum(tail**2)))
    if ord == 1:
        return float(np.sum(tail))
    raise ValueError(f"unsupported norm order {ord}")


def gen_zipfian(n: int, alpha: float, scale: float = 1.0, seed: int = 0) -> np.ndarray:
    """Power-law signal: i-th largest magnitude is exactly scale * i**-alpha.

    Positions are a seeded random permutation, signs are fair coins.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    rng = np.random.default_rng(seed)
    mags = scale * np.arange(1, n + 1, dtype=np.float64) ** (-alpha)
    signs = rng.choice([-1.0, 1.0], size=n)
    x = np.empty(n)
    x[rng.permutation(n)] = signs * mags
    return x


def gen_geometric(n: int, ratio: float, scale: float = 1.0, seed: int = 0) -> np.ndarray:
    """Geometrically decaying signal: i-th largest magnitude scale * ratio**i."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    mags = scale * ratio ** np.arange(n, dtype=np.float64)
    signs = rng.choice([-1.0, 1.0], size=n)
    x = np.empty(n)
    x[rng.permutation(n)] = signs * mags
    return x


def gen_block_sparse(
    n: int,
    b: int,
    k: int,
    block_norms,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> np.ndarray:
    """Plant k/b blocks with prescribed L2 norms plus a Gaussian tail.

    Blocks sit at seeded random block positions with random directions;
    tail noise is added only off the planted blocks so the block norms
    hold exactly.
    """
    if n % b != 0:
        raise ValueError("block length must divide n")
    if k % b != 0:
        raise ValueError("block length must divide k")
    block_norms = np.asarray(block_norms, dtype=np.float64)
    s = k // b
    if len(block_norms) != s:
        raise ValueError(f"expected {s} block norms, got {len(block_norms)}")
    t = n // b
    rng = np.random.default_rng(seed)
    planted = rng.choice(t, size=s, replace=False)
    x = np.zeros(n)
    if noise_sigma > 0:
        x = rng.normal(0.0, noise_sigma, size=n)
    for blk, norm in zip(planted, block_norms):
        direction = rng.standard_normal(b)
        direction /= np.linalg.norm(direction)
        x[blk * b : (blk + 1) * b] = norm * direction
    return x
