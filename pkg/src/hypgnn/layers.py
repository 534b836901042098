"""Manifold-agnostic graph convolutions and the full graph network.

A layer maps node points to the tangent space at the origin, applies the
per-relation, per-direction linear maps with normalized-adjacency
aggregation, maps back with the exponential map and only then applies the
nonlinearity.  Applying the nonlinearity before the exponential map would
let the next layer's logarithm cancel it; ``pre_exp_activation`` exists to
demonstrate exactly that.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from . import readout
from .autodiff import Tensor
from .graph import DIRECTIONS, Graph, NormalizedAdjacency, block_diag, cached_adjacency
from .manifolds import Lorentz, Manifold, get_manifold

MAX_DEGREE_BUCKET = 32


def lift_features(manifold: Manifold, x_euclidean) -> Tensor:
    """Map Euclidean feature rows onto the manifold through exp at the origin."""
    return manifold.expmap0(manifold.lift(x_euclidean))


def init_embeddings(manifold: Manifold, n: int, init_range: float = 0.01,
                    rng: np.random.Generator | int | None = 0) -> np.ndarray:
    """Uniform samples in ``[-init_range, init_range]`` pushed onto the manifold.

    For the Lorentz model the samples are the spatial coordinates and the
    time coordinate is solved from the hyperboloid constraint.
    """
    if init_range <= 0:
        raise ValueError("init_range must be positive")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    spatial = rng.uniform(-init_range, init_range, size=(n, manifold.dim))
    if isinstance(manifold, Lorentz):
        spatial = np.concatenate([np.zeros((n, 1)), spatial], axis=1)
    return manifold.project(spatial).data.copy()


def propagate(manifold: Manifold, h, adj_blocks: Dict, weights: Dict, slope: float = 0.5,
              pre_exp_activation: bool = False) -> Tensor:
    """One message-passing step.

    ``adj_blocks`` maps ``(relation, direction)`` to a sparse normalized
    adjacency; ``weights`` maps the same keys to ``[a x a]`` matrices acting
    on column vectors.  All keys of ``adj_blocks`` must have a weight.
    """
    h = ad._wrap(h)
    tangent = manifold.logmap0(h)
    msg = None
    for key, a_norm in adj_blocks.items():
        w = weights[key]
        if w.shape != (h.shape[1], h.shape[1]):
            raise ad.ShapeError(f"weight {key} has shape {w.shape}, nodes have {h.shape[1]} coordinates")
        term = ad.spmm(a_norm, tangent @ ad._wrap(w).T)
        msg = term if msg is None else msg + term
    # Lorentz exp at the origin reads only the spatial part, which is the
    # projection onto the origin's tangent space.
    if pre_exp_activation:
        return manifold.expmap0(ad.leaky_relu(msg, slope))
    return manifold.activation(manifold.expmap0(msg), slope)


@dataclass
class ModelConfig:
    manifold: str = "lorentz"
    dim: int = 5
    layers: int = 2
    centroids: Optional[int] = None
    num_classes: int = 3
    task: str = "graph-classification"
    num_relations: int = 1
    bidirectional: bool = False
    master_node: bool = False
    unit_ball: bool = True
    slope: float = 0.5
    init_range: float = 0.01
    num_buckets: int = MAX_DEGREE_BUCKET + 1
    input_dim: Optional[int] = None
    pre_exp_activation: bool = False
    bypass_hidden: bool = False

    def __post_init__(self):
        if self.centroids is None:
            self.centroids = self.dim
        for name in ("dim", "centroids", "num_classes", "num_relations", "num_buckets"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.layers < 0:
            raise ValueError("layers must be non-negative")
        if not 0 < self.slope <= 1:
            raise ValueError("activation slope must lie in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Batch:
    """Several graphs stacked into one block-diagonal graph."""

    blocks: Dict
    pool: sp.csr_matrix
    node_index: np.ndarray
    features: Optional[np.ndarray]
    sizes: List[int]
    targets: np.ndarray
    master_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def num_nodes(self) -> int:
        return self.pool.shape[1]


def degree_buckets(g: Graph, max_bucket: int = MAX_DEGREE_BUCKET) -> np.ndarray:
    return np.minimum(g.degree(), max_bucket)


def make_batch(graphs: Sequence[Graph], config: ModelConfig) -> Batch:
    """Stack graphs; masters (if any) sit after each graph's own nodes."""
    if not graphs:
        raise ValueError("empty batch")
    adjs = [cached_adjacency(g, config.bidirectional, config.master_node, config.num_relations)
            for g in graphs]
    keys = list(adjs[0].blocks)
    blocks = {key: block_diag([a.blocks[key] for a in adjs]) for key in keys}
    index, feats, masters = [], [], []
    offset = 0
    for g in graphs:
        if config.input_dim is None:
            index.append(np.minimum(degree_buckets(g), config.num_buckets - 1))
        else:
            if g.features is None or g.features.shape[1] != config.input_dim:
                raise ad.ShapeError(f"graph features must have {config.input_dim} columns")
            feats.append(g.features)
        if config.master_node:
            if config.input_dim is None:
                index.append(np.array([config.num_buckets]))
            else:
                feats.append(np.zeros((1, config.input_dim)))
            masters.append(offset + g.n)
        offset += g.n + (1 if config.master_node else 0)
    sizes = [g.n for g in graphs]
    pool = readout.pooling_matrix(sizes, master=config.master_node)
    targets = np.asarray([g.label for g in graphs])
    return Batch(blocks, pool,
                 np.concatenate(index) if index else np.zeros(0, dtype=np.int64),
                 np.concatenate(feats) if feats else None,
                 sizes, targets, np.asarray(masters, dtype=np.int64))


class HGNN:
    """Graph network on a chosen manifold with a centroid-distance readout.

    Parameters live in ``self.params`` as autodiff leaves.  ``embedding`` and
    ``centroids`` are manifold points; everything else is Euclidean.
    """

    MANIFOLD_PARAMS = ("embedding", "centroids")

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.manifold = get_manifold(config.manifold, config.dim, unit_ball=config.unit_ball)
        rng = np.random.default_rng(seed)
        m, a = self.manifold, self.manifold.ambient
        params: Dict[str, np.ndarray] = {}
        if config.input_dim is None:
            table = init_embeddings(m, config.num_buckets, config.init_range, rng)
            if config.master_node:
                table = np.concatenate([table, m.origin(1)], axis=0)
            params["embedding"] = table
        else:
            params["input_proj"] = _glorot(rng, config.dim, config.input_dim)
        rel_count = config.num_relations + (1 if config.master_node else 0)
        directions = DIRECTIONS if config.bidirectional else DIRECTIONS[:1]
        for k in range(config.layers):
            for r in range(rel_count):
                for d in directions:
                    params[self.weight_name(k, r, d)] = _glorot(rng, a, a)
        params["centroids"] = init_embeddings(m, config.centroids, config.init_range, rng)
        c = config.centroids
        out = config.num_classes if config.task.endswith("classification") else 1
        params["head_w1"] = _glorot(rng, c, c)
        params["head_b1"] = np.zeros(c)
        params["head_w2"] = _glorot(rng, out, c)
        params["head_b2"] = np.zeros(out)
        self.params = {name: Tensor(v, requires_grad=True, name=name) for name, v in params.items()}

    @staticmethod
    def weight_name(layer: int, rel: int, direction: str) -> str:
        return f"W{layer}_r{rel}_{direction}"

    def layer_weights(self, k: int, keys) -> Dict:
        return {key: self.params[self.weight_name(k, *key)] for key in keys}

    def manifold_params(self) -> List[Tensor]:
        return [self.params[n] for n in self.MANIFOLD_PARAMS if n in self.params]

    def euclidean_params(self) -> List[Tensor]:
        return [t for n, t in self.params.items() if n not in self.MANIFOLD_PARAMS]

    # -- forward -------------------------------------------------------
    def inputs(self, batch: Batch) -> Tensor:
        if self.config.input_dim is None:
            return self.params["embedding"][batch.node_index]
        x = Tensor(batch.features) @ self.params["input_proj"].T
        h = lift_features(self.manifold, x)
        if batch.master_rows.size:
            origin = self.manifold.origin(batch.num_nodes)
            mask = np.zeros((batch.num_nodes, 1), dtype=bool)
            mask[batch.master_rows] = True
            h = ad.where(mask, origin, h)
        return h

    def forward(self, batch: Batch, return_all: bool = False):
        """Node points after every layer (``return_all``) or after the last."""
        h = self.inputs(batch)
        states = [h]
        keys = list(batch.blocks)
        for k in range(self.config.layers):
            h = propagate(self.manifold, h, batch.blocks, self.layer_weights(k, keys),
                          self.config.slope, self.config.pre_exp_activation)
            states.append(h)
        return states if return_all else h

    def predict(self, batch: Batch) -> Tensor:
        """Logits (classification) or scalar predictions (regression) per graph."""
        h = self.forward(batch)
        psi = readout.centroid_distances(self.manifold, h, self.params["centroids"])
        pooled = readout.graph_pool(psi, batch.pool)
        p = self.params
        out = readout.graph_head(pooled, p["head_w1"], p["head_b1"], p["head_w2"], p["head_b2"],
                                 self.config.slope, self.config.bypass_hidden)
        if self.config.task.endswith("regression"):
            out = ad.reshape(out, (out.shape[0],))
        return out

    def loss(self, batch: Batch) -> Tensor:
        return readout.loss(self.predict(batch), batch.targets, self.config.task)

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()

    # -- state -----------------------------------------------------------
    def state_dict(self) -> Dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        if missing:
            raise KeyError(f"state is missing parameters: {sorted(missing)}")
        for n, t in self.params.items():
            arr = np.asarray(state[n], dtype=np.float64)
            if arr.shape != t.shape:
                raise ad.ShapeError(f"parameter {n}: expected shape {t.shape}, got {arr.shape}")
            t.data = arr.copy()
            t.zero_grad()


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))
