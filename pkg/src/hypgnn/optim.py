"""AMSGrad for Euclidean parameters and Riemannian AMSGrad for manifold points.

The Riemannian variant keeps first moments as tangent vectors, uses one
second-moment scalar per point (the squared Riemannian norm of the
gradient), retracts with the exact exponential map and carries momentum to
the new point by tangent projection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from .autodiff import NonFiniteError, Tensor
from .manifolds import Manifold

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8
GRAD_CLIP = 1.0


def _check_grad(grad: np.ndarray, name) -> None:
    if not np.isfinite(grad).all():
        raise NonFiniteError(f"non-finite gradient for parameter {name or '<unnamed>'}")


@dataclass
class MomentState:
    m: np.ndarray
    v: np.ndarray
    v_max: np.ndarray
    step: int = 0


def euclidean_step(param: np.ndarray, grad: np.ndarray, state: MomentState, lr: float,
                   betas=(BETA1, BETA2), eps: float = EPSILON) -> np.ndarray:
    """One bias-corrected AMSGrad update; returns the new parameter array."""
    _check_grad(grad, None)
    b1, b2 = betas
    state.step += 1
    state.m = b1 * state.m + (1 - b1) * grad
    state.v = b2 * state.v + (1 - b2) * grad * grad
    state.v_max = np.maximum(state.v_max, state.v)
    m_hat = state.m / (1 - b1 ** state.step)
    v_hat = state.v_max / (1 - b2 ** state.step)
    if lr == 0:
        return param
    return param - lr * m_hat / (np.sqrt(v_hat) + eps)


def riemannian_grad(manifold: Manifold, x, euclidean_grad) -> np.ndarray:
    """Convert an ambient gradient into a tangent vector at ``x``."""
    return manifold.egrad2rgrad(np.asarray(x, dtype=np.float64), np.asarray(euclidean_grad, dtype=np.float64))


def riemannian_step(manifold: Manifold, x: np.ndarray, euclidean_grad: np.ndarray, state: MomentState,
                    lr: float, betas=(BETA1, BETA2), eps: float = EPSILON,
                    clip: float | None = GRAD_CLIP) -> np.ndarray:
    """One Riemannian AMSGrad update of point rows ``x``; returns the new points."""
    _check_grad(euclidean_grad, None)
    b1, b2 = betas
    x = np.asarray(x, dtype=np.float64)
    r = riemannian_grad(manifold, x, euclidean_grad)
    sq = manifold.sqnorm(x, r)
    if clip is not None:
        norm = np.sqrt(sq)
        scale = np.where(norm > clip, clip / np.maximum(norm, 1e-300), 1.0)
        r = r * scale[..., None]
        sq = sq * scale ** 2
    state.step += 1
    state.m = b1 * state.m + (1 - b1) * r
    state.v = b2 * state.v + (1 - b2) * sq
    state.v_max = np.maximum(state.v_max, state.v)
    if lr == 0:
        return x
    direction = state.m / (np.sqrt(state.v_max)[..., None] + eps)
    direction = manifold.tangent_project(x, direction).data
    new = manifold.expmap(x, -lr * direction).data
    state.m = manifold.transport(x, new, state.m).data
    return new


class AMSGrad:
    """AMSGrad over a list of Euclidean leaves."""

    def __init__(self, params: Sequence[Tensor], lr: float = 0.01, betas=(BETA1, BETA2), eps: float = EPSILON):
        self.params = list(params)
        self.lr, self.betas, self.eps = lr, betas, eps
        self.state: List[MomentState] = [
            MomentState(np.zeros_like(p.data), np.zeros_like(p.data), np.zeros_like(p.data)) for p in self.params]

    def step(self) -> None:
        for p, st in zip(self.params, self.state):
            _check_grad(p.grad, p.name)
            p.data = euclidean_step(p.data, p.grad, st, self.lr, self.betas, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


class RiemannianAMSGrad:
    """Riemannian AMSGrad over leaves whose rows are points of ``manifold``."""

    def __init__(self, params: Sequence[Tensor], manifold: Manifold, lr: float = 0.001,
                 betas=(BETA1, BETA2), eps: float = EPSILON, clip: float | None = GRAD_CLIP):
        self.params = list(params)
        self.manifold = manifold
        self.lr, self.betas, self.eps, self.clip = lr, betas, eps, clip
        self.state: List[MomentState] = [
            MomentState(np.zeros_like(p.data), np.zeros(p.shape[:-1]), np.zeros(p.shape[:-1]))
            for p in self.params]

    def step(self) -> None:
        for p, st in zip(self.params, self.state):
            _check_grad(p.grad, p.name)
            p.data = riemannian_step(self.manifold, p.data, p.grad, st, self.lr, self.betas, self.eps, self.clip)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def state_arrays(opt) -> Dict[str, np.ndarray]:
    out = {}
    for i, st in enumerate(opt.state):
        out[f"{i}.m"], out[f"{i}.v"], out[f"{i}.v_max"] = st.m, st.v, st.v_max
        out[f"{i}.step"] = np.asarray(st.step)
    return out
