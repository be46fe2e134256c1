"""Count-Sketch locator and the top-k pipeline for power-law signals.

The locator hashes every coordinate into one bucket per table row with
a random sign; the median-of-rows estimator is accurate enough on
decaying signals to shortlist the heavy coordinates.  The pipeline then
estimates the shortlist with the peeling decoder and keeps the k
largest results.

Hash rows are seeded pseudorandom functions (full independence at the
scales this runs at), materialized per table so applying and estimating
are plain vectorized passes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .decoder import SupportSet, recover_robust
from .prng import prf64, prf_sign, stream_key
from .signals import SparseSignal

DEFAULT_ROWS_PER_LOG = 4
DEFAULT_WIDTH_FACTOR = 6
DEFAULT_CANDIDATE_MULTIPLIER = 9


@dataclass(frozen=True)
class CountSketchParams:
    n: int
    rows: int
    width: int
    seed: int
    candidate_multiplier: int = DEFAULT_CANDIDATE_MULTIPLIER


def derive_cs_params(
    n: int,
    k: int,
    eps: float,
    seed: int = 0,
    rows: int | None = None,
    width: int | None = None,
    candidate_multiplier: int = DEFAULT_CANDIDATE_MULTIPLIER,
) -> CountSketchParams:
    """Default table shape: ~4 rows per log2(n), width ~6k/eps^2."""
    if n < 1 or k < 1:
        raise ValueError("need n >= 1 and k >= 1")
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    if rows is None:
        rows = max(1, math.ceil(DEFAULT_ROWS_PER_LOG * math.log2(max(n, 2))))
    if width is None:
        width = math.ceil(DEFAULT_WIDTH_FACTOR * k / eps**2)
    width = max(width, 2 * k)
    if rows < 1:
        raise ValueError("need at least one hash row")
    return CountSketchParams(
        n=n,
        rows=rows,
        width=width,
        seed=seed,
        candidate_multiplier=candidate_multiplier,
    )


class CountSketchTable:
    """Hash table stack: per row a bucket array, a hash h and signs g.

    The row hashes are materialized as (rows, n) arrays; buckets hold
    the sketched signal and are linear in it.
    """

    def __init__(self, params: CountSketchParams):
        self.params = params
        coords = np.arange(params.n, dtype=np.uint64)
        h_keys = stream_key(params.seed, 2 * np.arange(params.rows, dtype=np.int64))
        g_keys = stream_key(
            params.seed, 2 * np.arange(params.rows, dtype=np.int64) + 1
        )
        self.h = (prf64(h_keys[:, None], coords[None, :]) % np.uint64(params.width)
                  ).astype(np.int64)
        self.g = prf_sign(g_keys[:, None], coords[None, :])
        self.buckets = np.zeros((params.rows, params.width))

    def copy(self) -> "CountSketchTable":
        out = CountSketchTable.__new__(CountSketchTable)
        out.params = self.params
        out.h = self.h
        out.g = self.g
        out.buckets = self.buckets.copy()
        return out


def cs_build(params: CountSketchParams) -> CountSketchTable:
    """Empty table for the given parameters (deterministic per seed)."""
    return CountSketchTable(params)


def cs_apply(params_or_table, signal) -> CountSketchTable:
    """Sketch a signal into a fresh table."""
    if isinstance(params_or_table, CountSketchTable):
        table = params_or_table.copy()
        table.buckets[:] = 0.0
    else:
        table = cs_build(params_or_table)
    n = table.params.n
    if isinstance(signal, SparseSignal):
        if signal.n != n:
            raise ValueError(f"signal dimension {signal.n} does not match n={n}")
        idx, vals = signal.indices, signal.values
        for j in range(table.params.rows):
            table.buckets[j] = np.bincount(
                table.h[j, idx], weights=table.g[j, idx] * vals,
                minlength=table.params.width,
            )
    else:
        x = np.asarray(signal, dtype=np.float64)
        if x.shape != (n,):
            raise ValueError(f"signal shape {x.shape} does not match n={n}")
        for j in range(table.params.rows):
            table.buckets[j] = np.bincount(
                table.h[j], weights=table.g[j] * x, minlength=table.params.width
            )
    return table


def cs_update(table: CountSketchTable, i: int, delta: float) -> CountSketchTable:
    """Point update, in place; touches exactly one cell per row."""
    if not 0 <= i < table.params.n:
        raise IndexError(f"index {i} out of range for n={table.params.n}")
    rows = np.arange(table.params.rows)
    table.buckets[rows, table.h[:, i]] += delta * table.g[:, i]
    return table


def cs_estimate(table: CountSketchTable, i: int) -> float:
    """Median over rows of the signed bucket holding coordinate i."""
    if not 0 <= i < table.params.n:
        raise IndexError(f"index {i} out of range for n={table.params.n}")
    rows = np.arange(table.params.rows)
    vals = table.g[:, i] * table.buckets[rows, table.h[:, i]]
    return float(np.median(vals))


def cs_estimate_all(table: CountSketchTable) -> np.ndarray:
    """cs_estimate for every coordinate, vectorized."""
    rows = np.arange(table.params.rows)[:, None]
    vals = table.g * table.buckets[rows, table.h]
    return np.median(vals, axis=0)


def locate_candidates(table: CountSketchTable, k: int) -> SupportSet:
    """Shortlist the candidate_multiplier * k largest estimated coordinates.

    Ties break toward the lower index; returns all n coordinates when
    the shortlist would exceed n.
    """
    m = min(table.params.candidate_multiplier * k, table.params.n)
    est = cs_estimate_all(table)
    order = np.argsort(-np.abs(est), kind="stable")
    return SupportSet(np.sort(order[:m]), n=table.params.n)


def top_k_threshold(signal, k: int) -> np.ndarray:
    """Keep the k largest-magnitude coordinates (ties toward lower index)."""
    x = np.asarray(signal, dtype=np.float64)
    if k < 0:
        raise ValueError("k must be non-negative")
    if k >= len(x):
        return x.copy()
    order = np.argsort(-np.abs(x), kind="stable")
    out = np.zeros_like(x)
    keep = order[:k]
    out[keep] = x[keep]
    return out


def recover_zipfian(
    cs_table: CountSketchTable,
    sq_matrices,
    sq_sketches,
    k: int,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Locate candidates, estimate them over the shortlist, keep the top k.

    Both sketch families must be taken of the same signal; the set-query
    matrices should be derived with their error factor shrunk to a
    fraction of the target (the thresholding step triples it).
    """
    candidates = locate_candidates(cs_table, k)
    estimate = recover_robust(sq_matrices, sq_sketches, candidates, rng=rng)
    return top_k_threshold(estimate.to_dense(), k)
