"""Graphs and normalized adjacency matrices."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

DIRECTIONS = ("in", "out")


@dataclass(eq=False)
class Graph:
    """A directed multigraph with typed, weighted edges.

    Undirected graphs store every edge in both directions.  ``label`` is a
    class id or a real target for the whole graph (``level == "graph"``) or
    a per-node sequence (``level == "node"``).
    """

    n: int
    src: np.ndarray
    dst: np.ndarray
    rel: np.ndarray = None
    weight: np.ndarray = None
    label: object = None
    level: str = "graph"
    features: Optional[np.ndarray] = None
    _adj_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.n = int(self.n)
        self.src = np.asarray(self.src, dtype=np.int64).reshape(-1)
        self.dst = np.asarray(self.dst, dtype=np.int64).reshape(-1)
        m = self.src.size
        self.rel = np.zeros(m, dtype=np.int64) if self.rel is None else np.asarray(self.rel, dtype=np.int64).reshape(-1)
        self.weight = np.ones(m) if self.weight is None else np.asarray(self.weight, dtype=np.float64).reshape(-1)
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=np.float64)
        self.validate()

    @classmethod
    def from_edges(cls, n: int, edges: Sequence[Tuple], **kwargs) -> "Graph":
        """Build from ``(src, dst[, rel[, weight]])`` tuples."""
        cols = [[], [], [], []]
        for e in edges:
            src, dst = e[0], e[1]
            rel = e[2] if len(e) > 2 else 0
            w = e[3] if len(e) > 3 else 1.0
            for col, val in zip(cols, (src, dst, rel, w)):
                col.append(val)
        return cls(n, cols[0], cols[1], cols[2], cols[3], **kwargs)

    @classmethod
    def undirected(cls, n: int, pairs, **kwargs) -> "Graph":
        """Store each unordered pair ``(u, v)`` as the two arcs u->v and v->u."""
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        src = np.concatenate([pairs[:, 0], pairs[:, 1]])
        dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
        return cls(n, src, dst, **kwargs)

    def validate(self) -> None:
        if self.n < 0:
            raise ValueError("node count must be non-negative")
        if not (self.src.size == self.dst.size == self.rel.size == self.weight.size):
            raise ValueError("edge arrays have different lengths")
        if self.src.size:
            if self.src.min() < 0 or self.dst.min() < 0 or max(self.src.max(), self.dst.max()) >= self.n:
                raise ValueError(f"edge endpoint outside [0, {self.n})")
            if self.rel.min() < 0:
                raise ValueError("relation ids must be non-negative")
            if not np.all(self.weight > 0):
                raise ValueError("edge weights must be positive")
        if self.level not in ("graph", "node"):
            raise ValueError(f"level must be 'graph' or 'node', got {self.level!r}")
        if self.features is not None and self.features.shape[0] != self.n:
            raise ValueError("feature rows must match node count")

    @property
    def edges(self):
        return list(zip(self.src.tolist(), self.dst.tolist(), self.rel.tolist(), self.weight.tolist()))

    @property
    def num_relations(self) -> int:
        return int(self.rel.max()) + 1 if self.rel.size else 1

    def degree(self) -> np.ndarray:
        """Number of distinct neighbours of each node, ignoring direction."""
        cached = self._adj_cache.get("degree")
        if cached is None:
            cached = self._adj_cache["degree"] = self._degree()
        return cached

    def _degree(self) -> np.ndarray:
        if not self.src.size:
            return np.zeros(self.n, dtype=np.int64)
        a = np.minimum(self.src, self.dst)
        b = np.maximum(self.src, self.dst)
        keep = a != b
        keys = np.unique(a[keep] * self.n + b[keep])
        return np.bincount(np.concatenate([keys // self.n, keys % self.n]), minlength=self.n)

    def undirected_pairs(self) -> np.ndarray:
        a = np.minimum(self.src, self.dst)
        b = np.maximum(self.src, self.dst)
        return np.unique(np.stack([a, b], axis=1), axis=0) if a.size else np.zeros((0, 2), dtype=np.int64)

    def permute(self, perm: np.ndarray) -> "Graph":
        """Relabel node ``i`` as ``perm[i]``."""
        perm = np.asarray(perm)
        feats = None
        if self.features is not None:
            feats = np.empty_like(self.features)
            feats[perm] = self.features
        label = self.label
        if self.level == "node" and label is not None:
            arr = np.asarray(label)
            label = np.empty_like(arr)
            label[perm] = arr
        return Graph(self.n, perm[self.src], perm[self.dst], self.rel.copy(), self.weight.copy(),
                     label, self.level, feats)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        same_feats = (self.features is None and other.features is None) or (
            self.features is not None and other.features is not None
            and np.array_equal(self.features, other.features))
        return (self.n == other.n and self.level == other.level
                and np.array_equal(self.src, other.src) and np.array_equal(self.dst, other.dst)
                and np.array_equal(self.rel, other.rel) and np.array_equal(self.weight, other.weight)
                and np.array_equal(np.asarray(self.label), np.asarray(other.label))
                and same_feats)


@dataclass
class NormalizedAdjacency:
    """``D^-1/2 (A + I) D^-1/2`` per (relation, direction).

    Row ``u`` of the ``"in"`` block aggregates messages from in-neighbours of
    ``u``; the ``"out"`` block aggregates from out-neighbours.  When a master
    node is present it is the last row, index ``num_nodes - 1``.
    """

    blocks: Dict[Tuple[int, str], sp.csr_matrix]
    num_nodes: int
    master: bool = False

    def dense(self, rel: int = 0, direction: str = "in") -> np.ndarray:
        return self.blocks[(rel, direction)].toarray()


def _sym_normalize(a: sp.spmatrix) -> sp.csr_matrix:
    a = sp.csr_matrix(a) + sp.identity(a.shape[0], format="csr")
    deg = np.asarray(a.sum(axis=1)).reshape(-1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    d = sp.diags(inv_sqrt)
    out = (d @ a @ d).tocsr()
    out.sort_indices()
    return out


def normalize_adjacency(g: Graph, bidirectional: bool = False, master_node: bool = False,
                        num_relations: Optional[int] = None) -> NormalizedAdjacency:
    """Normalized adjacency blocks for message passing.

    Parallel edges of one relation are summed into a single entry.  With
    ``master_node`` a virtual node joined to every node in both directions is
    appended under its own relation id ``num_relations``.
    """
    if g.n == 0:
        raise ValueError("cannot normalize the adjacency of an empty graph")
    num_rel = g.num_relations if num_relations is None else int(num_relations)
    if g.rel.size and g.rel.max() >= num_rel:
        raise ValueError(f"relation id {g.rel.max()} >= num_relations {num_rel}")
    src, dst, rel, w = g.src, g.dst, g.rel, g.weight
    n = g.n
    if master_node:
        hub = np.full(n, n)
        nodes = np.arange(n)
        src = np.concatenate([src, nodes, hub])
        dst = np.concatenate([dst, hub, nodes])
        rel = np.concatenate([rel, np.full(2 * n, num_rel)])
        w = np.concatenate([w, np.ones(2 * n)])
        n += 1
        num_rel += 1
    directions = DIRECTIONS if bidirectional else DIRECTIONS[:1]
    blocks = {}
    for r in range(num_rel):
        sel = rel == r
        for direction in directions:
            rows, cols = (dst[sel], src[sel]) if direction == "in" else (src[sel], dst[sel])
            a = sp.coo_matrix((w[sel], (rows, cols)), shape=(n, n))
            blocks[(r, direction)] = _sym_normalize(a)
    return NormalizedAdjacency(blocks, n, master_node)


def block_diag(mats: Sequence[sp.csr_matrix]) -> sp.csr_matrix:
    """Block-diagonal stack of square CSR matrices."""
    data, indices, indptr = [], [], [np.zeros(1, dtype=np.int64)]
    offset = nnz = 0
    for m in mats:
        data.append(m.data)
        indices.append(m.indices.astype(np.int64) + offset)
        indptr.append(m.indptr[1:].astype(np.int64) + nnz)
        offset += m.shape[0]
        nnz += m.nnz
    return sp.csr_matrix((np.concatenate(data), np.concatenate(indices), np.concatenate(indptr)),
                         shape=(offset, offset))


def cached_adjacency(g: Graph, bidirectional: bool, master_node: bool,
                     num_relations: int) -> NormalizedAdjacency:
    key = (bidirectional, master_node, num_relations)
    adj = g._adj_cache.get(key)
    if adj is None:
        adj = normalize_adjacency(g, bidirectional, master_node, num_relations)
        g._adj_cache[key] = adj
    return adj
