"""Centroid-distance readout heads and training losses."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tensor
from .manifolds import Manifold

PROB_FLOOR = 1e-12


def centroid_distances(manifold: Manifold, h, centroids) -> Tensor:
    """Matrix of distances: entry (j, i) is d(c_i, h_j)."""
    h, centroids = ad._wrap(h), ad._wrap(centroids)
    if h.shape[-1] != centroids.shape[-1]:
        raise ad.ShapeError(f"node points have {h.shape[-1]} coordinates, centroids {centroids.shape[-1]}")
    n, a = h.shape
    k = centroids.shape[0]
    return manifold.distance(ad.reshape(centroids, (1, k, a)), ad.reshape(h, (n, 1, a)))


def node_regression(psi, w_o) -> Tensor:
    """Scalar prediction per node: ``psi @ w_o``."""
    psi, w_o = ad._wrap(psi), ad._wrap(w_o)
    if psi.ndim == 1:
        return ad.dot(psi, w_o)
    return ad.reshape(psi @ ad.reshape(w_o, (-1, 1)), (psi.shape[0],))


def node_classification(psi, W_o) -> Tensor:
    """Class distribution per node: ``softmax(W_o psi)``."""
    psi, W_o = ad._wrap(psi), ad._wrap(W_o)
    if psi.ndim == 1:
        psi = ad.reshape(psi, (1, -1))
        return ad.reshape(ad.softmax(psi @ W_o.T), (W_o.shape[0],))
    return ad.softmax(psi @ W_o.T)


def pooling_matrix(sizes, master: bool = False) -> sp.csr_matrix:
    """Averaging operator mapping stacked node rows to one row per graph.

    ``sizes`` are the real node counts; with ``master`` each graph block has
    one extra trailing row that receives zero weight.
    """
    rows, cols, vals = [], [], []
    offset = 0
    for b, n in enumerate(sizes):
        if n < 1:
            raise ValueError("cannot pool an empty graph")
        rows.extend([b] * n)
        cols.extend(range(offset, offset + n))
        vals.extend([1.0 / n] * n)
        offset += n + (1 if master else 0)
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(sizes), offset))


def graph_pool(psi, pool: sp.spmatrix | None = None) -> Tensor:
    """Average distance profile per graph.  Without ``pool``: one graph, all rows."""
    psi = ad._wrap(psi)
    if psi.shape[0] == 0:
        raise ad.ShapeError("cannot pool zero nodes")
    if pool is None:
        return ad.mean(psi, axis=0)
    return ad.spmm(pool, psi)


def graph_head(pooled, w1, b1, w2, b2, slope: float = 0.5, bypass_hidden: bool = False) -> Tensor:
    """One leaky-ReLU hidden layer then a linear output layer.

    ``bypass_hidden`` drops the hidden layer (``w1``, ``b1`` unused) so the
    output is an affine map of the pooled distances.
    """
    pooled = ad._wrap(pooled)
    single = pooled.ndim == 1
    if single:
        pooled = ad.reshape(pooled, (1, -1))
    if bypass_hidden:
        z = pooled
    else:
        z = ad.leaky_relu(pooled @ ad._wrap(w1).T + b1, slope)
    out = z @ ad._wrap(w2).T + b2
    return ad.reshape(out, (out.shape[1],)) if single else out


def cross_entropy(logits, targets) -> Tensor:
    """Mean negative log-probability of the targets; probabilities floored at 1e-12."""
    logits = ad._wrap(logits)
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if logits.ndim == 1:
        logits = ad.reshape(logits, (1, -1))
    num_classes = logits.shape[1]
    if targets.size != logits.shape[0]:
        raise ad.ShapeError("one target per row required")
    if targets.size and (targets.min() < 0 or targets.max() >= num_classes):
        raise ValueError(f"class id outside [0, {num_classes})")
    probs = ad.softmax(logits, axis=-1)
    picked = probs[np.arange(targets.size), targets]
    return -ad.mean(ad.log(ad.clamp(picked, lo=PROB_FLOOR)))


def probability_cross_entropy(probs, targets) -> Tensor:
    """Cross entropy of already-normalized probabilities."""
    probs = ad._wrap(probs)
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if probs.ndim == 1:
        probs = ad.reshape(probs, (1, -1))
    if targets.size and (targets.min() < 0 or targets.max() >= probs.shape[1]):
        raise ValueError(f"class id outside [0, {probs.shape[1]})")
    picked = probs[np.arange(targets.size), targets]
    return -ad.mean(ad.log(ad.clamp(picked, lo=PROB_FLOOR)))


def mse(pred, target) -> Tensor:
    pred = ad._wrap(pred)
    diff = pred - np.asarray(target, dtype=np.float64).reshape(pred.shape)
    return ad.mean(diff * diff)


def loss(prediction, target, task: str) -> Tensor:
    if task.endswith("classification"):
        return cross_entropy(prediction, target)
    if task.endswith("regression"):
        return mse(prediction, target)
    raise ValueError(f"unknown task {task!r}")
