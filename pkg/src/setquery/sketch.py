"""Column-sparse random +/-1 measurement matrices and their sketches.

The matrix has exactly ``d`` nonzero entries per column, at distinct
rows drawn uniformly without replacement, each entry an independent
fair +/-1.  Columns are generated from per-column counter streams of
the master seed, so a matrix is a pure function of its parameters and
can be rebuilt bit-identically anywhere.

A ``Sketch`` is the measurement vector: the matrix applied to a signal,
optionally plus additive noise.  It is linear, so point updates touch
exactly ``d`` cells.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass, replace

import numpy as np

from .prng import prf64, prf_sign, stream_key
from .signals import SparseSignal

NORM_L2 = "l2"
NORM_L1 = "l1"

MAGIC = b"SQS1"
FORMAT_VERSION = 1
TAG_MATRIX = 1
TAG_SKETCH = 2
TAG_BLOCK_SKETCH = 3


class CodecError(ValueError):
    """Raised on malformed serialized data (magic, version, CRC, length)."""


@dataclass(frozen=True)
class SketchParams:
    """Dimensions and seed fully determining a measurement matrix.

    n: ambient dimension, k: nominal support size, eps: target error
    factor, d: column sparsity, norm: "l2" or "l1", w: number of rows.
    """

    n: int
    k: int
    eps: float
    d: int
    norm: str
    seed: int
    w: int


def derive_params(
    n: int,
    k: int,
    eps: float = 1.0,
    norm: str = NORM_L2,
    d: int = 7,
    seed: int = 0,
) -> SketchParams:
    """Choose the row count for the requested error factor.

    w must cover both the error analysis (d^2 k / eps^2 rows for L2,
    d k / eps for L1) and the peeling termination condition
    w >= 2 d (d-1) k, so we take the max of the two.
    """
    if not (n >= k >= 1):
        raise ValueError(f"need n >= k >= 1, got n={n}, k={k}")
    if not (0 < eps <= 1):
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    if d < 7:
        raise ValueError(f"column sparsity d must be >= 7, got {d}")
    if norm not in (NORM_L2, NORM_L1):
        raise ValueError(f"norm must be '{NORM_L2}' or '{NORM_L1}', got {norm!r}")
    if norm == NORM_L2:
        w_err = math.ceil(d * d * k / eps**2)
    else:
        w_err = math.ceil(d * k / eps)
    w = max(w_err, 2 * d * (d - 1) * k)
    return SketchParams(n=n, k=k, eps=eps, d=d, norm=norm, seed=seed, w=w)


class SketchMatrix:
    """Measurement matrix stored as per-column (row, sign) lists.

    rows[j] holds column j's d distinct row indices, signs[j] the
    matching +/-1 entries.
    """

    def __init__(self, params: SketchParams, rows: np.ndarray, signs: np.ndarray):
        rows = np.asarray(rows, dtype=np.int64)
        signs = np.asarray(signs, dtype=np.int8)
        if rows.shape != (params.n, params.d) or signs.shape != rows.shape:
            raise ValueError("rows/signs must have shape (n, d)")
        self.params = params
        self.rows = rows
        self.signs = signs

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def w(self) -> int:
        return self.params.w

    @property
    def d(self) -> int:
        return self.params.d

    def column(self, j: int) -> list[tuple[int, int]]:
        """The (row, sign) entries of column j."""
        return list(zip(self.rows[j].tolist(), self.signs[j].tolist()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SketchMatrix):
            return NotImplemented
        return (
            self.params == other.params
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.signs, other.signs)
        )


def build_matrix(params: SketchParams) -> SketchMatrix:
    """Sample the matrix determined by params (deterministic per seed)."""
    if params.d < 1:
        raise ValueError("column sparsity must be at least 1")
    if params.w < params.d:
        raise ValueError(f"need w >= d, got w={params.w}, d={params.d}")
    rows, signs = _sample_columns(params, np.arange(params.n, dtype=np.int64))
    return SketchMatrix(params, rows, signs)


def _sample_columns(params: SketchParams, cols: np.ndarray):
    """Floyd sampling of d distinct rows per column, vectorized over columns.

    Randomness comes from the per-column counter stream, so any subset
    of columns regenerates identically in any order.
    """
    d, w = params.d, params.w
    keys = stream_key(params.seed, cols)
    draw_slots = np.arange(d, dtype=np.uint64)
    draws = prf64(keys[:, None], draw_slots[None, :])
    rows = np.empty((len(cols), d), dtype=np.int64)
    for i, t in enumerate(range(w - d, w)):
        r = (draws[:, i] % np.uint64(t + 1)).astype(np.int64)
        if i:
            dup = (rows[:, :i] == r[:, None]).any(axis=1)
            rows[:, i] = np.where(dup, t, r)
        else:
            rows[:, 0] = r
    sign_slots = np.arange(d, 2 * d, dtype=np.uint64)
    signs = prf_sign(keys[:, None], sign_slots[None, :])
    return rows, signs


@dataclass
class Sketch:
    """Measurement vector of length w, tagged with its generating params."""

    values: np.ndarray
    params: SketchParams

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.params.w,):
            raise ValueError(
                f"sketch length {self.values.shape} does not match w={self.params.w}"
            )

    def copy(self) -> "Sketch":
        return Sketch(self.values.copy(), self.params)


def apply(matrix: SketchMatrix, signal) -> Sketch:
    """Sketch a signal: values[q] = sum_j A[q, j] * x[j]."""
    if isinstance(signal, SparseSignal):
        if signal.n != matrix.n:
            raise ValueError(
                f"signal dimension {signal.n} does not match n={matrix.n}"
            )
        rows = matrix.rows[signal.indices]
        contrib = matrix.signs[signal.indices] * signal.values[:, None]
    else:
        x = np.asarray(signal, dtype=np.float64)
        if x.shape != (matrix.n,):
            raise ValueError(f"signal shape {x.shape} does not match n={matrix.n}")
        rows = matrix.rows
        contrib = matrix.signs * x[:, None]
    values = np.bincount(
        rows.ravel(), weights=contrib.ravel(), minlength=matrix.w
    )
    return Sketch(values, matrix.params)


def update(sketch: Sketch, matrix: SketchMatrix, index: int, delta: float) -> Sketch:
    """Add delta at one coordinate, in place; touches exactly d cells."""
    if sketch.params != matrix.params:
        raise ValueError("sketch and matrix parameters do not match")
    if not 0 <= index < matrix.n:
        raise IndexError(f"index {index} out of range for n={matrix.n}")
    sketch.values[matrix.rows[index]] += delta * matrix.signs[index]
    return sketch


def add_noise(sketch: Sketch, nu) -> Sketch:
    """Componentwise sum with a noise vector of length w."""
    nu = np.asarray(nu, dtype=np.float64)
    if nu.shape != sketch.values.shape:
        raise ValueError(f"noise shape {nu.shape} does not match w={sketch.params.w}")
    return Sketch(sketch.values + nu, sketch.params)


def split_binary_rows(matrix: SketchMatrix) -> SketchMatrix:
    """Split each row into a positive and a negative half.

    Row 2q collects the +1 entries of old row q, row 2q+1 the -1
    entries (stored with sign +1), so the original sketch of any signal
    is values[2q] - values[2q+1].
    """
    new_rows = 2 * matrix.rows + (matrix.signs < 0)
    new_signs = np.ones_like(matrix.signs)
    new_params = replace(matrix.params, w=2 * matrix.params.w)
    return SketchMatrix(new_params, new_rows, new_signs)


# --- serialization ----------------------------------------------------------
#
# Container layout (all integers little-endian):
#   magic "SQS1" | u32 version | u8 section tag | body | u32 CRC32
# The CRC covers everything before the trailer.  Matrix and sketch
# bodies start with the params block:
#   n u64 | k u64 | w u64 | d u64 | eps f64 | norm u8 | seed u64

_PARAMS_FMT = "<QQQQdBQ"
_NORM_CODES = {NORM_L2: 0, NORM_L1: 1}
_NORM_NAMES = {v: k for k, v in _NORM_CODES.items()}


def pack_container(tag: int, body: bytes) -> bytes:
    payload = MAGIC + struct.pack("<IB", FORMAT_VERSION, tag) + body
    return payload + struct.pack("<I", zlib.crc32(payload))


def unpack_container(data: bytes) -> tuple[int, bytes]:
    if len(data) < len(MAGIC) + 5 + 4:
        raise CodecError("truncated stream")
    if data[: len(MAGIC)] != MAGIC:
        raise CodecError("bad magic; not an SQS1 container")
    version, tag = struct.unpack_from("<IB", data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CodecError(f"unsupported format version {version}")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != crc:
        raise CodecError("checksum failure")
    return tag, data[len(MAGIC) + 5 : -4]


def _pack_params(p: SketchParams) -> bytes:
    return struct.pack(
        _PARAMS_FMT, p.n, p.k, p.w, p.d, p.eps, _NORM_CODES[p.norm], p.seed
    )


def _unpack_params(body: bytes, offset: int) -> tuple[SketchParams, int]:
    size = struct.calcsize(_PARAMS_FMT)
    if len(body) < offset + size:
        raise CodecError("truncated params block")
    n, k, w, d, eps, norm_code, seed = struct.unpack_from(_PARAMS_FMT, body, offset)
    if norm_code not in _NORM_NAMES:
        raise CodecError(f"unknown norm code {norm_code}")
    params = SketchParams(
        n=n, k=k, eps=eps, d=d, norm=_NORM_NAMES[norm_code], seed=seed, w=w
    )
    return params, offset + size


def _read_array(body: bytes, offset: int, dtype: str, count: int):
    nbytes = np.dtype(dtype).itemsize * count
    if len(body) < offset + nbytes:
        raise CodecError("truncated array block")
    arr = np.frombuffer(body, dtype=dtype, count=count, offset=offset)
    return arr, offset + nbytes


def serialize_matrix(matrix: SketchMatrix) -> bytes:
    body = (
        _pack_params(matrix.params)
        + matrix.rows.astype("<u8").tobytes()
        + matrix.signs.astype("<i1").tobytes()
    )
    return pack_container(TAG_MATRIX, body)


def deserialize_matrix(data: bytes) -> SketchMatrix:
    tag, body = unpack_container(data)
    if tag != TAG_MATRIX:
        raise CodecError(f"expected matrix section, found tag {tag}")
    params, off = _unpack_params(body, 0)
    count = params.n * params.d
    rows, off = _read_array(body, off, "<u8", count)
    signs, off = _read_array(body, off, "<i1", count)
    return SketchMatrix(
        params,
        rows.astype(np.int64).reshape(params.n, params.d),
        signs.astype(np.int8).reshape(params.n, params.d),
    )


def serialize_sketch(sketch: Sketch) -> bytes:
    body = _pack_params(sketch.params) + sketch.values.astype("<f8").tobytes()
    return pack_container(TAG_SKETCH, body)


def deserialize_sketch(data: bytes) -> Sketch:
    tag, body = unpack_container(data)
    if tag != TAG_SKETCH:
        raise CodecError(f"expected sketch section, found tag {tag}")
    params, off = _unpack_params(body, 0)
    values, off = _read_array(body, off, "<f8", params.w)
    return Sketch(values.copy(), params)


# Extra section decoders (e.g. block sketches) register here by tag.
SECTION_DECODERS = {
    TAG_MATRIX: deserialize_matrix,
    TAG_SKETCH: deserialize_sketch,
}


def serialize(obj) -> bytes:
    if isinstance(obj, SketchMatrix):
        return serialize_matrix(obj)
    if isinstance(obj, Sketch):
        return serialize_sketch(obj)
    serializer = getattr(obj, "serialize", None)
    if serializer is not None:
        return serializer()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def deserialize(data: bytes):
    tag, _ = unpack_container(data)
    decoder = SECTION_DECODERS.get(tag)
    if decoder is None:
        raise CodecError(f"unknown section tag {tag}")
    return decoder(data)
