"""Peeling decoder: estimate a signal over a known support from its sketch.

Restricted to the query support, the measurement matrix is a d-uniform
hypergraph on the sketch cells.  A cell touched by exactly one
surviving support element is *isolated*; its value is that element's
coefficient (up to sign) plus whatever tail/noise landed there.  The
decoder repeatedly picks a random support element with at least d-1
isolated cells (falling back to d-2 when none exists), estimates it as
the signed median over its isolated cells, subtracts the estimate from
the sketch, and removes the element.  If no element has d-2 isolated
cells the decode aborts.

The loop is driven by incremental bookkeeping: per-cell surviving-edge
counts with an XOR accumulator to name the last survivor, per-edge
isolated-cell counts, and two eligibility queues.  The queues support
uniform random selection by rank so that a from-scratch reference
implementation draws identical choices from the same RNG, which is what
the equivalence tests pin down.
"""

from __future__ import annotations

import math
from array import array
from dataclasses import dataclass, field

import numpy as np

from . import hypergraph
from .signals import SparseSignal, as_dense
from .sketch import NORM_L1, NORM_L2, Sketch, SketchMatrix, apply


class SupportSet:
    """The query set: distinct coordinates held in sorted canonical order."""

    def __init__(self, indices, n: int | None = None):
        raw = np.asarray(
            indices if isinstance(indices, np.ndarray) else list(indices),
            dtype=np.int64,
        )
        arr = np.unique(raw)
        if len(arr) != len(raw):
            raise ValueError("support indices must be distinct")
        if len(arr) and arr[0] < 0:
            raise ValueError("support indices must be non-negative")
        if n is not None and len(arr) and arr[-1] >= n:
            raise ValueError(f"support index {arr[-1]} out of range for n={n}")
        self.indices = arr

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices.tolist())

    def __contains__(self, i) -> bool:
        pos = np.searchsorted(self.indices, i)
        return pos < len(self.indices) and self.indices[pos] == i

    def __eq__(self, other) -> bool:
        if not isinstance(other, SupportSet):
            return NotImplemented
        return np.array_equal(self.indices, other.indices)

    def to_list(self) -> list[int]:
        return self.indices.tolist()


def as_support(support, n: int | None = None) -> SupportSet:
    if isinstance(support, SupportSet):
        return support
    return SupportSet(support, n=n)


@dataclass(slots=True)
class PeelLogEntry:
    """One peeled support element: when, from how many isolated cells."""

    index: int
    order: int
    isolated_count: int
    used_fallback: bool
    isolated_rows: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "order": self.order,
            "isolated_count": self.isolated_count,
            "used_fallback": self.used_fallback,
        }


@dataclass
class RecoveryDiagnostics:
    """Ground-truth-only instrumentation.

    point_errors: per-element signed median of the residual (tail plus
    noise) over the cells its estimate used.  component_sizes: number
    of support elements in the same connected component.
    """

    point_errors: dict[int, float]
    component_sizes: dict[int, int]


@dataclass
class RecoveryResult:
    estimate: SparseSignal
    peel_log: list[PeelLogEntry] = field(default_factory=list)
    diagnostics: RecoveryDiagnostics | None = None


class RecoveryError(Exception):
    """Decoding aborted: no support element had d-2 isolated cells left.

    Carries the partial estimate and the residual (unpeeled) support so
    the caller can retry with a fresh matrix seed.
    """

    def __init__(self, partial_estimate: SparseSignal, residual_support: np.ndarray):
        self.partial_estimate = partial_estimate
        self.residual_support = residual_support
        super().__init__(
            f"peeling aborted with {len(residual_support)} support elements left"
        )


def _as_array(typecode: str, values: np.ndarray) -> array:
    """Flat stdlib array initialized from a numpy array's raw bytes."""
    out = array(typecode, bytes())
    out.frombytes(np.ascontiguousarray(values).tobytes())
    return out


class _RankQueue:
    """Dynamic subset of [0, size) with rank selection.

    add/discard/select are O(log size) via a Fenwick tree; select(r)
    returns the r-th smallest member, which makes "pick uniformly at
    random" reproducible by any implementation that orders candidates
    ascending.
    """

    __slots__ = ("_n", "_tree", "_member", "count", "_mask")

    def __init__(self, members: np.ndarray):
        n = len(members)
        self._n = n
        self._member = bytearray(np.asarray(members, dtype=np.uint8).tobytes())
        self.count = int(sum(self._member))
        freq = array("q", bytes(8))
        freq.frombytes(np.asarray(members, dtype=np.int64).tobytes())
        for i in range(1, n + 1):
            j = i + (i & -i)
            if j <= n:
                freq[j] += freq[i]
        self._tree = freq
        self._mask = 1 << (n.bit_length() - 1) if n else 0

    def _shift(self, i: int, delta: int):
        i += 1
        while i <= self._n:
            self._tree[i] += delta
            i += i & -i

    def add(self, i: int):
        if not self._member[i]:
            self._member[i] = 1
            self.count += 1
            self._shift(i, 1)

    def discard(self, i: int):
        if self._member[i]:
            self._member[i] = 0
            self.count -= 1
            self._shift(i, -1)

    def select(self, r: int) -> int:
        """The r-th smallest member, 0-indexed; r must be < count."""
        rem = r + 1
        pos = 0
        mask = self._mask
        tree = self._tree
        while mask:
            nxt = pos + mask
            if nxt <= self._n and tree[nxt] < rem:
                pos = nxt
                rem -= tree[nxt]
            mask >>= 1
        return pos


def median(vals) -> float:
    """Median convention used everywhere: sort; odd length takes the
    middle element, even length the mean of the two middle elements."""
    vs = sorted(vals)
    m = len(vs)
    if m == 0:
        raise ValueError("median of empty sequence")
    h = m // 2
    if m % 2:
        return float(vs[h])
    return float((vs[h - 1] + vs[h]) / 2.0)


def recover(
    matrix: SketchMatrix,
    sketch: Sketch,
    support,
    rng: np.random.Generator | None = None,
    ground_truth=None,
) -> RecoveryResult:
    """Estimate the signal over ``support`` by peeling the sketch.

    Raises RecoveryError when peeling cannot continue; the error carries
    the partial estimate and residual support.  When ``ground_truth``
    is given, per-element point errors and component sizes are attached
    as diagnostics.
    """
    if matrix.params != sketch.params:
        raise ValueError("sketch was not produced by this matrix (params differ)")
    d = matrix.d
    if d < 3:
        raise ValueError("peeling requires column sparsity d >= 3")
    support = as_support(support, n=matrix.n)
    if rng is None:
        rng = np.random.default_rng()
    idx = support.indices
    k = len(idx)

    edge_rows = matrix.rows[idx]
    edge_signs = matrix.signs[idx]

    # Dense cell ids for the rows in the support's image.
    flat = edge_rows.ravel()
    unique_rows, inv = np.unique(flat, return_inverse=True)
    edge_cells = inv.reshape(k, d)
    edge_ids = np.repeat(np.arange(k, dtype=np.int64), d)
    p_count_arr = np.bincount(inv, minlength=len(unique_rows))
    p_xor_arr = np.zeros(len(unique_rows), dtype=np.int64)
    np.bitwise_xor.at(p_xor_arr, inv, edge_ids)
    iso_arr = (p_count_arr[edge_cells] == 1).sum(axis=1)

    queue_near = _RankQueue(iso_arr >= d - 1)
    queue_far = _RankQueue(iso_arr >= d - 2)

    # The loop only ever touches cells in the support's image, so work on
    # a compact copy of those.  Flat unboxed arrays index faster than
    # nested lists or numpy scalars at this size.
    cells_f = _as_array("q", edge_cells.ravel().astype(np.int64))
    signs_f = array("b", edge_signs.ravel().astype(np.int8).tobytes())
    pc = _as_array("q", p_count_arr.astype(np.int64))
    px = _as_array("q", p_xor_arr)
    iso = _as_array("q", iso_arr.astype(np.int64))
    b = array("d", sketch.values[unique_rows].tobytes())
    urows = _as_array("q", unique_rows.astype(np.int64))
    idx_l = idx.tolist()

    estimates = [0.0] * k
    peeled = bytearray(k)
    log: list[PeelLogEntry] = []

    for order in range(k):
        if queue_near.count:
            r = int(rng.integers(queue_near.count))
            s = queue_near.select(r)
            fallback = False
        elif queue_far.count:
            r = int(rng.integers(queue_far.count))
            s = queue_far.select(r)
            fallback = True
        else:
            done = [t for t in range(k) if peeled[t]]
            partial = SparseSignal(
                matrix.n, idx[done], np.array([estimates[t] for t in done])
            )
            residual = idx[[t for t in range(k) if not peeled[t]]]
            raise RecoveryError(partial, residual)

        base = s * d
        iso_rows = []
        vals = []
        for t in range(base, base + d):
            q_cell = cells_f[t]
            if pc[q_cell] == 1:
                iso_rows.append(urows[q_cell])
                vals.append(signs_f[t] * b[q_cell])
        est = median(vals)
        for t in range(base, base + d):
            b[cells_f[t]] -= est * signs_f[t]
        estimates[s] = est
        peeled[s] = 1
        queue_near.discard(s)
        queue_far.discard(s)
        log.append(
            PeelLogEntry(
                index=idx_l[s],
                order=order,
                isolated_count=len(vals),
                used_fallback=fallback,
                isolated_rows=tuple(iso_rows),
            )
        )
        for t in range(base, base + d):
            q_cell = cells_f[t]
            pc[q_cell] -= 1
            px[q_cell] ^= s
            if pc[q_cell] == 1:
                survivor = px[q_cell]
                iso[survivor] += 1
                level = iso[survivor]
                if level == d - 2:
                    queue_far.add(survivor)
                elif level == d - 1:
                    queue_near.add(survivor)

    estimate = SparseSignal(matrix.n, idx, np.array(estimates))
    diagnostics = None
    if ground_truth is not None:
        diagnostics = _diagnostics(matrix, sketch, support, ground_truth, log)
    return RecoveryResult(estimate=estimate, peel_log=log, diagnostics=diagnostics)


def _diagnostics(matrix, sketch, support, ground_truth, log) -> RecoveryDiagnostics:
    x = as_dense(ground_truth, matrix.n)
    idx = support.indices
    head = SparseSignal(matrix.n, idx, x[idx])
    residual = sketch.values - apply(matrix, head).values
    sign_of = {}
    for j in idx.tolist():
        for q, sg in zip(matrix.rows[j].tolist(), matrix.signs[j].tolist()):
            sign_of[(j, q)] = sg
    point_errors = {
        e.index: median([sign_of[(e.index, q)] * residual[q] for q in e.isolated_rows])
        for e in log
    }
    report = hypergraph.components(matrix, support)
    return RecoveryDiagnostics(
        point_errors=point_errors, component_sizes=dict(report.edge_component_sizes)
    )


def recover_robust(
    matrices,
    sketches,
    support,
    rng: np.random.Generator | None = None,
) -> SparseSignal:
    """Median-combine independent repetitions of ``recover``.

    Aborted repetitions contribute all-zero estimates, keeping the
    repetition count fixed; if every repetition aborts this raises
    RecoveryError.
    """
    if len(matrices) != len(sketches) or not matrices:
        raise ValueError("need equally many matrices and sketches, at least one")
    n = matrices[0].n
    support = as_support(support, n=n)
    if rng is None:
        rng = np.random.default_rng()
    k = len(support)
    per_rep = np.zeros((len(matrices), k))
    aborted = 0
    for i, (mat, sk) in enumerate(zip(matrices, sketches)):
        try:
            per_rep[i] = recover(mat, sk, support, rng=rng).estimate.values
        except RecoveryError:
            aborted += 1
    if aborted == len(matrices):
        raise RecoveryError(
            SparseSignal(n, support.indices, np.zeros(k)), support.indices
        )
    combined = np.median(per_rep, axis=0)
    return SparseSignal(n, support.indices, combined)


def error_ratio(estimate, x, support, nu=None, norm: str = NORM_L2) -> float:
    """Recovery error relative to the tail-plus-noise mass.

    Returns ||est - x_S|| / (||x - x_S|| + ||nu||) in the given norm;
    0 when the denominator vanishes and the estimate is exact, +inf
    when it vanishes and the estimate is not.
    """
    if norm not in (NORM_L2, NORM_L1):
        raise ValueError(f"unknown norm {norm!r}")
    order = 2 if norm == NORM_L2 else 1
    x = as_dense(x)
    support = as_support(support, n=len(x))
    est = as_dense(estimate, len(x))
    x_head = np.zeros_like(x)
    x_head[support.indices] = x[support.indices]
    num = float(np.linalg.norm(est - x_head, ord=order))
    den = float(np.linalg.norm(x - x_head, ord=order))
    if nu is not None:
        den += float(np.linalg.norm(np.asarray(nu, dtype=np.float64), ord=order))
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den
