"""Random graph generators and the synthetic graph-classification dataset.

Each dataset file is line-delimited JSON, one graph per line::

    {"n": 4, "edges": [[0, 1, 0, 1.0], ...], "label": 1, "level": "graph"}

with an optional ``"features"`` matrix.  Floats are written with ``repr``
precision, so loading a saved dataset reproduces it exactly.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .graph import Graph

logger = logging.getLogger(__name__)

ALGORITHMS = ("er", "ba", "ws")
CLASS_IDS = {"er": 0, "ba": 1, "ws": 2}
CLASS_NAMES = {v: k for k, v in CLASS_IDS.items()}


class DatasetFormatError(ValueError):
    """A dataset file could not be parsed."""


# -- generators -------------------------------------------------------

def gen_erdos_renyi(n: int, p: float, rng: np.random.Generator) -> Graph:
    """G(n, p): every unordered pair is joined independently with probability p."""
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return Graph.undirected(n, np.stack([iu[keep], ju[keep]], axis=1))


def gen_barabasi_albert(n: int, m: int, rng: np.random.Generator) -> Graph:
    """Preferential attachment grown from ``m`` isolated seed nodes.

    Each added node links to ``m`` distinct existing nodes chosen with
    probability proportional to their current degree, falling back to a
    uniform choice while every existing degree is zero.
    """
    if not 1 <= m < n:
        raise ValueError(f"need 1 <= m < n, got m={m}, n={n}")
    degree = np.zeros(n)
    pairs = []
    for new in range(m, n):
        deg = degree[:new]
        total = deg.sum()
        p = None if total == 0 else deg / total
        targets = rng.choice(new, size=m, replace=False, p=p)
        for t in targets:
            pairs.append((t, new))
        degree[targets] += 1
        degree[new] += m
    return Graph.undirected(n, pairs)


def gen_watts_strogatz(n: int, k: int, rewire: float, rng: np.random.Generator) -> Graph:
    """Ring lattice with ``k/2`` neighbours per side and random rewiring.

    Lattice edges ``(u, u + j)`` are visited for ``j = 1..k/2``; each is
    rewired with probability ``rewire`` to a uniformly chosen node that is
    neither ``u`` nor already adjacent to ``u``.
    """
    if k % 2 or not 0 < k < n:
        raise ValueError(f"k must be even with 0 < k < n, got k={k}, n={n}")
    adj = [set() for _ in range(n)]
    for u in range(n):
        for j in range(1, k // 2 + 1):
            v = (u + j) % n
            adj[u].add(v)
            adj[v].add(u)
    for j in range(1, k // 2 + 1):
        for u in range(n):
            v = (u + j) % n
            if rng.random() >= rewire:
                continue
            if v not in adj[u] or len(adj[u]) >= n - 1:
                continue
            candidates = np.setdiff1d(np.arange(n), np.fromiter(adj[u] | {u}, dtype=np.int64))
            w = int(rng.choice(candidates))
            adj[u].discard(v)
            adj[v].discard(u)
            adj[u].add(w)
            adj[w].add(u)
    pairs = [(u, v) for u in range(n) for v in adj[u] if u < v]
    return Graph.undirected(n, pairs)


# -- dataset specification ---------------------------------------------

@dataclass
class GenSpec:
    """Sampling ranges per generator.  Ranges are inclusive."""

    classes: Tuple[str, ...] = ALGORITHMS
    n_range: Tuple[int, int] = (30, 100)
    p_range: Tuple[float, float] = (0.1, 1.0)
    m_range: Tuple[int, int] = (1, 10)
    k_range: Tuple[int, int] = (2, 20)
    rewire_range: Tuple[float, float] = (0.1, 1.0)
    per_class: int = 300
    seed: int = 0
    split: Tuple[float, float, float] = (0.7, 0.15, 0.15)

    @classmethod
    def large_scale(cls, **overrides) -> "GenSpec":
        """Larger graphs: 100-500 nodes, m and k up to ~100."""
        params = dict(n_range=(100, 500), m_range=(1, 99), k_range=(2, 98))
        params.update(overrides)
        return cls(**params)

    def validate(self) -> None:
        unknown = set(self.classes) - set(ALGORITHMS)
        if unknown or not self.classes:
            raise ValueError(f"classes must be a non-empty subset of {ALGORITHMS}, got {self.classes}")
        n_min, n_max = self.n_range
        if not 1 <= n_min <= n_max:
            raise ValueError(f"invalid node range {self.n_range}")
        if self.per_class < 1:
            raise ValueError("per_class must be positive")
        p_lo, p_hi = self.p_range
        if not 0 < p_lo <= p_hi <= 1:
            raise ValueError(f"ER probability range must lie in (0, 1], got {self.p_range}")
        m_lo, m_hi = self.m_range
        if not 1 <= m_lo <= m_hi < n_min:
            raise ValueError(f"BA m range must satisfy 1 <= m < n_min, got {self.m_range}")
        k_lo, k_hi = self.k_range
        if k_lo % 2 or k_hi % 2 or not 2 <= k_lo <= k_hi < n_min:
            raise ValueError(f"WS k range must be even with k < n_min, got {self.k_range}")
        r_lo, r_hi = self.rewire_range
        if not 0 <= r_lo <= r_hi <= 1:
            raise ValueError(f"rewire range must lie in [0, 1], got {self.rewire_range}")
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ValueError(f"split fractions must be non-negative and sum to 1, got {self.split}")


def generate_graph(spec: GenSpec, algorithm: str, rng: np.random.Generator) -> Graph:
    n = int(rng.integers(spec.n_range[0], spec.n_range[1] + 1))
    if algorithm == "er":
        g = gen_erdos_renyi(n, float(rng.uniform(*spec.p_range)), rng)
    elif algorithm == "ba":
        g = gen_barabasi_albert(n, int(rng.integers(spec.m_range[0], spec.m_range[1] + 1)), rng)
    elif algorithm == "ws":
        half = int(rng.integers(spec.k_range[0] // 2, spec.k_range[1] // 2 + 1))
        g = gen_watts_strogatz(n, 2 * half, float(rng.uniform(*spec.rewire_range)), rng)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    g.label = CLASS_IDS[algorithm]
    return g


@dataclass
class Dataset:
    graphs: List[Graph]
    splits: Dict[str, List[int]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.graphs)

    def subset(self, split: str) -> List[Graph]:
        return [self.graphs[i] for i in self.splits[split]]

    def labels(self) -> np.ndarray:
        return np.asarray([g.label for g in self.graphs])

    def class_counts(self, split: str | None = None) -> Dict[int, int]:
        idx = range(len(self.graphs)) if split is None else self.splits[split]
        counts: Dict[int, int] = {}
        for i in idx:
            lab = int(self.graphs[i].label)
            counts[lab] = counts.get(lab, 0) + 1
        return dict(sorted(counts.items()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (len(self.graphs) == len(other.graphs)
                and all(a == b for a, b in zip(self.graphs, other.graphs))
                and self.splits == other.splits)


def stratified_split(labels: Sequence, fractions=(0.7, 0.15, 0.15), seed: int = 0) -> Dict[str, List[int]]:
    """Deterministic per-class train/valid/test split of graph indices.

    Only discrete labels are stratified; real-valued targets share one stratum.
    """
    labels = np.asarray(labels)
    strata = labels if labels.dtype.kind in "iub" else np.zeros(len(labels), dtype=int)
    rng = np.random.default_rng(seed)
    out = {"train": [], "valid": [], "test": []}
    for value in np.unique(strata):
        idx = np.flatnonzero(strata == value)
        idx = idx[rng.permutation(idx.size)]
        n_train = int(round(fractions[0] * idx.size))
        n_valid = int(round(fractions[1] * idx.size))
        out["train"].extend(idx[:n_train].tolist())
        out["valid"].extend(idx[n_train:n_train + n_valid].tolist())
        out["test"].extend(idx[n_train + n_valid:].tolist())
    return {k: sorted(v) for k, v in out.items()}


def build_dataset(spec: GenSpec) -> Dataset:
    """Generate ``per_class`` graphs for each algorithm in ``spec.classes``.

    Graph ``i`` is drawn from its own generator seeded by ``(seed, i)``, so the
    result is a pure function of ``spec``.
    """
    spec.validate()
    graphs = []
    for c, algorithm in enumerate(spec.classes):
        for j in range(spec.per_class):
            index = c * spec.per_class + j
            rng = np.random.default_rng([spec.seed, index])
            graphs.append(generate_graph(spec, algorithm, rng))
    return Dataset(graphs, stratified_split([g.label for g in graphs], spec.split))


# -- serialization ----------------------------------------------------

def graph_to_record(g: Graph) -> dict:
    label = g.label
    if isinstance(label, np.ndarray):
        label = label.tolist()
    elif isinstance(label, np.generic):
        label = label.item()
    rec = {
        "n": g.n,
        "edges": [[int(s), int(d), int(r), float(w)] for s, d, r, w in zip(g.src, g.dst, g.rel, g.weight)],
        "label": label,
        "level": g.level,
    }
    if g.features is not None:
        rec["features"] = g.features.tolist()
    return rec


def record_to_graph(rec: dict) -> Graph:
    if not isinstance(rec, dict):
        raise ValueError("record is not an object")
    for key in ("n", "edges"):
        if key not in rec:
            raise ValueError(f"missing field {key!r}")
    edges = rec["edges"]
    if not isinstance(edges, list) or any(not isinstance(e, list) or len(e) != 4 for e in edges):
        raise ValueError("edges must be a list of [src, dst, rel, weight]")
    arr = np.asarray(edges, dtype=np.float64).reshape(-1, 4)
    ints = arr[:, :3]
    if not np.all(ints == np.round(ints)):
        raise ValueError("edge endpoints and relation ids must be integers")
    return Graph(int(rec["n"]), ints[:, 0].astype(np.int64), ints[:, 1].astype(np.int64),
                 ints[:, 2].astype(np.int64), arr[:, 3], label=rec.get("label"),
                 level=rec.get("level", "graph"), features=rec.get("features"))


def save_graphs(graphs: Sequence[Graph], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for g in graphs:
            fh.write(json.dumps(graph_to_record(g), separators=(",", ":")))
            fh.write("\n")


def load_graphs(path) -> List[Graph]:
    graphs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                graphs.append(record_to_graph(json.loads(line)))
            except (ValueError, TypeError) as exc:
                raise DatasetFormatError(f"{path}:{lineno}: {exc}") from exc
    return graphs


def save(dataset: Dataset, path) -> None:
    save_graphs(dataset.graphs, path)


def load(path, split=(0.7, 0.15, 0.15)) -> Dataset:
    """Read a dataset file; splits are recomputed from the labels."""
    graphs = load_graphs(Path(path))
    if not graphs:
        raise DatasetFormatError(f"{path}: no graphs")
    return Dataset(graphs, stratified_split([g.label for g in graphs], split))
