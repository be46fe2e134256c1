"""Block heavy hitters: find the heaviest blocks of a partitioned signal.

Each length-b block is dimension-reduced through a shared m x b Gaussian
projector; every projection coordinate gets its own signed hash table
over the block indices.  A block's L2 norm is estimated as a scaled
median of the absolute table cells it hashes to: each projection of a
block is Gaussian with standard deviation equal to the block norm, and
the median of |N(0, sigma^2)| is sigma / 1.4826.

Combined with the peeling decoder over the located blocks this gives
end-to-end block-sparse recovery.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import sketch as _sketch
from .decoder import SupportSet, recover_robust
from .prng import box_muller
from .signals import as_dense
from .sketch import CodecError, TAG_BLOCK_SKETCH, pack_container, unpack_container

MERSENNE_P = (1 << 61) - 1
MEDIAN_SCALE = 1.4826  # 1 / (inverse normal CDF at 0.75)

DEFAULT_PROJECTIONS_PER_LOG = 4
DEFAULT_WIDTH_FACTOR = 2


@dataclass(frozen=True)
class BlockParams:
    """Shape of the block sketch.

    n: signal length, b: block length, k: total budget (s = k/b blocks),
    m: projections per block, l: width of each hash table.  A signal
    whose length is not a multiple of b is zero-padded internally; block
    indices always refer to the padded partition.
    """

    n: int
    b: int
    k: int
    eps: float
    m: int
    l: int
    seed: int
    alpha: float = MEDIAN_SCALE

    @property
    def s(self) -> int:
        return self.k // self.b

    @property
    def t(self) -> int:
        return -(-self.n // self.b)

    @property
    def padded_n(self) -> int:
        return self.t * self.b


def derive_block_params(
    n: int,
    b: int,
    k: int,
    eps: float,
    seed: int = 0,
    m: int | None = None,
    l: int | None = None,
) -> BlockParams:
    if n < 1 or b < 1:
        raise ValueError("need n >= 1 and b >= 1")
    if k % b != 0:
        raise ValueError("block length must divide k")
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    s = k // b
    t = -(-n // b)
    if s > t:
        raise ValueError(f"cannot keep {s} blocks out of {t}")
    if m is None:
        m = math.ceil(DEFAULT_PROJECTIONS_PER_LOG * math.log2(max(n, 2)) / eps**2)
    if l is None:
        l = max(math.ceil(DEFAULT_WIDTH_FACTOR * s / eps**3), 2 * s)
    return BlockParams(n=n, b=b, k=k, eps=eps, m=m, l=l, seed=seed)


class BlockSketch:
    """Gaussian projector plus m pairwise-independent signed hash tables.

    Cell j of table i holds the sum of g_i(q) * (rho @ block_q)[i] over
    blocks q hashing to j, so the tables are linear in the signal.
    """

    def __init__(self, params: BlockParams, coeffs: np.ndarray | None = None,
                 rho: np.ndarray | None = None):
        self.params = params
        rng = np.random.default_rng(params.seed)
        if rho is None:
            rho = box_muller(rng, (params.m, params.b))
        self.rho = rho
        if coeffs is None:
            # Degree-1 hash coefficients over the Mersenne-prime field:
            # per table a value polynomial and a sign polynomial.
            coeffs = np.empty((params.m, 4), dtype=np.uint64)
            coeffs[:, 0] = rng.integers(1, MERSENNE_P, size=params.m)
            coeffs[:, 1] = rng.integers(0, MERSENNE_P, size=params.m)
            coeffs[:, 2] = rng.integers(1, MERSENNE_P, size=params.m)
            coeffs[:, 3] = rng.integers(0, MERSENNE_P, size=params.m)
        self.coeffs = coeffs
        self.h = np.empty((params.m, params.t), dtype=np.int64)
        self.g = np.empty((params.m, params.t), dtype=np.int8)
        for i in range(params.m):
            ah, ch, ag, cg = (int(v) for v in coeffs[i])
            vals_h = [(ah * q + ch) % MERSENNE_P for q in range(params.t)]
            vals_g = [(ag * q + cg) % MERSENNE_P for q in range(params.t)]
            self.h[i] = [v % params.l for v in vals_h]
            self.g[i] = [1 - 2 * (v & 1) for v in vals_g]
        self.tables = np.zeros((params.m, params.l))


def bhh_build(params: BlockParams) -> BlockSketch:
    """Empty block sketch (projector and hashes fixed by the seed)."""
    return BlockSketch(params)


def bhh_apply(structure: BlockSketch, x) -> BlockSketch:
    """Populate the tables with a signal's block projections."""
    p = structure.params
    x = as_dense(x)
    if len(x) == p.n and p.padded_n != p.n:
        x = np.concatenate([x, np.zeros(p.padded_n - p.n)])
    if len(x) != p.padded_n:
        raise ValueError(f"signal length {len(x)} does not match n={p.n}")
    projections = x.reshape(p.t, p.b) @ structure.rho.T
    for i in range(p.m):
        structure.tables[i] = np.bincount(
            structure.h[i],
            weights=structure.g[i] * projections[:, i],
            minlength=p.l,
        )
    return structure


def bhh_estimate_block(structure: BlockSketch, i: int) -> float:
    """Estimated L2 norm of block i: alpha * median |table cell|."""
    p = structure.params
    if not 0 <= i < p.t:
        raise IndexError(f"block index {i} out of range for t={p.t}")
    cells = structure.tables[np.arange(p.m), structure.h[:, i]]
    return p.alpha * float(np.median(np.abs(cells)))


def bhh_estimate_all(structure: BlockSketch) -> np.ndarray:
    p = structure.params
    cells = structure.tables[np.arange(p.m)[:, None], structure.h]
    return p.alpha * np.median(np.abs(cells), axis=0)


def bhh_locate(structure: BlockSketch, s: int | None = None) -> SupportSet:
    """Coordinates of the s blocks with the largest estimated norms.

    Ties break toward the lower block index.  The median scaling
    constant cancels in the ranking, so selection never depends on it.
    """
    p = structure.params
    if s is None:
        s = p.s
    s = min(s, p.t)
    cells = structure.tables[np.arange(p.m)[:, None], structure.h]
    scores = np.median(np.abs(cells), axis=0)
    chosen = np.argsort(-scores, kind="stable")[:s]
    coords = (chosen[:, None] * p.b + np.arange(p.b)[None, :]).ravel()
    coords = coords[coords < p.n]
    return SupportSet(np.sort(coords), n=p.n)


def err_block(x, k: int, b: int) -> float:
    """L2 norm of the signal minus its k/b heaviest blocks (the exact
    minimizer over block-sparse approximations)."""
    x = as_dense(x)
    if len(x) % b != 0:
        raise ValueError("block length must divide the signal length")
    if k % b != 0:
        raise ValueError("block length must divide k")
    t = len(x) // b
    s = k // b
    if s >= t:
        return 0.0
    norms_sq = (x.reshape(t, b) ** 2).sum(axis=1)
    kept_out = np.sort(norms_sq)[: t - s]
    return float(np.sqrt(kept_out.sum()))


def recover_block_sparse(
    structure: BlockSketch,
    sq_matrices,
    sq_sketches,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Locate the heavy blocks, then estimate them over that support.

    Both sketch families must be taken of the same signal; the output
    is block-sparse on the located blocks.
    """
    support = bhh_locate(structure)
    estimate = recover_robust(sq_matrices, sq_sketches, support, rng=rng)
    return estimate.to_dense()


# --- serialization (shares the SQS1 container, own section tag) -------------

_BLOCK_HEADER_FMT = "<QQQdQQQd"


def serialize_block_sketch(structure: BlockSketch) -> bytes:
    p = structure.params
    body = struct.pack(
        _BLOCK_HEADER_FMT, p.n, p.b, p.k, p.eps, p.m, p.l, p.seed, p.alpha
    )
    body += structure.coeffs.astype("<u8").tobytes()
    body += structure.rho.astype("<f8").tobytes()
    body += structure.tables.astype("<f8").tobytes()
    return pack_container(TAG_BLOCK_SKETCH, body)


def deserialize_block_sketch(data: bytes) -> BlockSketch:
    tag, body = unpack_container(data)
    if tag != TAG_BLOCK_SKETCH:
        raise CodecError(f"expected block sketch section, found tag {tag}")
    size = struct.calcsize(_BLOCK_HEADER_FMT)
    if len(body) < size:
        raise CodecError("truncated block header")
    n, b, k, eps, m, l, seed, alpha = struct.unpack_from(_BLOCK_HEADER_FMT, body, 0)
    params = BlockParams(n=n, b=b, k=k, eps=eps, m=m, l=l, seed=seed, alpha=alpha)
    off = size
    coeffs, off = _sketch._read_array(body, off, "<u8", m * 4)
    rho, off = _sketch._read_array(body, off, "<f8", m * b)
    tables, off = _sketch._read_array(body, off, "<f8", m * l)
    structure = BlockSketch(
        params,
        coeffs=coeffs.reshape(m, 4).copy(),
        rho=rho.reshape(m, b).copy(),
    )
    structure.tables = tables.reshape(m, l).copy()
    return structure


_sketch.SECTION_DECODERS[TAG_BLOCK_SKETCH] = deserialize_block_sketch
