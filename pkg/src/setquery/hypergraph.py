"""Structural diagnostics of the support's induced hypergraph.

Restricting the measurement matrix to a support set S gives a d-uniform
hypergraph: each support element is a hyperedge over the d sketch rows
it touches.  A connected component with s edges and r vertices is a
*hypertree* when r = s(d-1)+1, *unicyclic* when r = s(d-1), and
*complex* when it is denser.  Hypertrees and unicyclic components are
always peelable, so a report with no complex component certifies the
decoder cannot abort on that instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sketch import SketchMatrix

HYPERTREE = "hypertree"
UNICYCLIC = "unicyclic"
COMPLEX = "complex"


@dataclass
class Component:
    """One connected component: its support elements and sketch rows."""

    edges: tuple[int, ...]
    vertices: tuple[int, ...]
    klass: str

    @property
    def size(self) -> int:
        return len(self.edges)


@dataclass
class ComponentReport:
    d: int
    components: list[Component]
    edge_component_sizes: dict[int, int] = field(default_factory=dict)

    @property
    def class_counts(self) -> dict[str, int]:
        counts = {HYPERTREE: 0, UNICYCLIC: 0, COMPLEX: 0}
        for comp in self.components:
            counts[comp.klass] += 1
        return counts

    @property
    def max_component_size(self) -> int:
        return max((c.size for c in self.components), default=0)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "class_counts": self.class_counts,
            "max_component_size": self.max_component_size,
            "components": [
                {
                    "edges": list(c.edges),
                    "n_vertices": len(c.vertices),
                    "class": c.klass,
                }
                for c in self.components
            ],
        }


def classify(n_vertices: int, n_edges: int, d: int) -> str:
    if n_vertices == n_edges * (d - 1) + 1:
        return HYPERTREE
    if n_vertices == n_edges * (d - 1):
        return UNICYCLIC
    return COMPLEX


class _UnionFind:
    def __init__(self):
        self.parent: dict[int, int] = {}
        self.rank: dict[int, int] = {}

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def add(self, x: int):
        if x not in self.parent:
            self.parent[x] = x
            self.rank[x] = 0

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1


def components(matrix: SketchMatrix, support) -> ComponentReport:
    """Connected components of the support's hypergraph, classified."""
    from .decoder import as_support

    support = as_support(support, n=matrix.n)
    idx = support.indices
    uf = _UnionFind()
    for j in idx.tolist():
        rows = matrix.rows[j].tolist()
        for q in rows:
            uf.add(q)
        for q in rows[1:]:
            uf.union(rows[0], q)

    edges_by_root: dict[int, list[int]] = {}
    verts_by_root: dict[int, set[int]] = {}
    for j in idx.tolist():
        rows = matrix.rows[j].tolist()
        root = uf.find(rows[0])
        edges_by_root.setdefault(root, []).append(j)
        verts_by_root.setdefault(root, set()).update(rows)

    comps = []
    sizes: dict[int, int] = {}
    for root, edges in sorted(edges_by_root.items()):
        verts = verts_by_root[root]
        comp = Component(
            edges=tuple(sorted(edges)),
            vertices=tuple(sorted(verts)),
            klass=classify(len(verts), len(edges), matrix.d),
        )
        comps.append(comp)
        for j in edges:
            sizes[j] = len(edges)
    return ComponentReport(d=matrix.d, components=comps, edge_component_sizes=sizes)


def peelable(report: ComponentReport) -> bool:
    """True iff every component is a hypertree or unicyclic.

    This certifies the peeling decoder terminates on the instance; a
    complex component may (but need not) make it abort.
    """
    return all(c.klass != COMPLEX for c in report.components)


@dataclass
class ComponentSizeStats:
    """Edge-weighted moments of component size across sampled reports."""

    n_samples: int
    n_edges: int
    mean: float
    mean_sq: float
    mean_4th: float
    pairwise_cov_sq: float


def component_size_stats(reports) -> ComponentSizeStats:
    """Empirical E[D], E[D^2], E[D^4] and the pairwise covariance of
    D_i^2, D_j^2 across same-instance edge pairs.

    Each edge of each sampled report contributes its component size D.
    """
    reports = list(reports)
    if len(reports) < 2:
        raise ValueError("need at least 2 sampled reports")
    total = 0
    sum_d = sum_d2 = sum_d4 = 0.0
    pair_sum = 0.0
    pair_count = 0
    for rep in reports:
        d_vals = np.array(
            [size for _, size in sorted(rep.edge_component_sizes.items())],
            dtype=np.float64,
        )
        total += len(d_vals)
        d2 = d_vals**2
        sum_d += float(d_vals.sum())
        sum_d2 += float(d2.sum())
        sum_d4 += float((d2**2).sum())
        # Sum of D_i^2 D_j^2 over ordered pairs i != j within the instance.
        pair_sum += float(d2.sum() ** 2 - (d2**2).sum())
        pair_count += len(d_vals) * (len(d_vals) - 1)
    mean_sq = sum_d2 / total
    cov = (pair_sum / pair_count - mean_sq**2) if pair_count else 0.0
    return ComponentSizeStats(
        n_samples=len(reports),
        n_edges=total,
        mean=sum_d / total,
        mean_sq=mean_sq,
        mean_4th=sum_d4 / total,
        pairwise_cov_sq=cov,
    )
