"""Euclidean space, the Poincare ball and the Lorentz (hyperboloid) model.

Points and tangent vectors are stored as rows of arrays; the last axis holds
coordinates.  Every geometric operation accepts numpy arrays or autodiff
tensors and returns a :class:`~hypgnn.autodiff.Tensor`, so the same code
serves training (with gradients) and plain evaluation.

The tangent space at the origin is where all learned linear maps act, so
each manifold has dedicated ``expmap0``/``logmap0`` routines next to the
general maps.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import EPS, Tensor

BALL_MAX_NORM = 1.0 - 1e-5
TANGENT_NORM_CAP = 10.0

KINDS = ("euclidean", "poincare", "lorentz")


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _cap_norm(v: Tensor, norm: Tensor, cap: float = TANGENT_NORM_CAP):
    """Rescale rows of ``v`` whose ``norm`` exceeds ``cap``; returns (v, norm)."""
    if not np.any(norm.data > cap):
        return v, norm
    scale = cap / ad.clamp(norm, lo=cap)
    return v * scale, norm * scale


def _check_finite(x: Tensor, where: str) -> None:
    if not np.isfinite(x.data).all():
        raise ad.NonFiniteError(f"{where}: non-finite coordinates")


def lorentz_inner(x, y, keepdims: bool = False) -> Tensor:
    """Lorentzian scalar product -x0*y0 + sum_i xi*yi along the last axis."""
    x, y = _t(x), _t(y)
    if x.shape[-1] != y.shape[-1]:
        raise ad.ShapeError(f"lorentz_inner: lengths differ ({x.shape[-1]} vs {y.shape[-1]})")
    if x.shape[-1] < 2:
        raise ad.ShapeError("lorentz_inner needs at least 2 coordinates")
    sign = np.ones(x.shape[-1])
    sign[0] = -1.0
    return ad.sum(x * y * sign, axis=-1, keepdims=keepdims)


def mobius_add(x, y) -> Tensor:
    """Mobius addition x (+) y on the unit Poincare ball."""
    x, y = _t(x), _t(y)
    xy = ad.dot(x, y, keepdims=True)
    x2 = ad.dot(x, x, keepdims=True)
    y2 = ad.dot(y, y, keepdims=True)
    num = (1.0 + 2.0 * xy + y2) * x + (1.0 - x2) * y
    den = 1.0 + 2.0 * xy + x2 * y2 + EPS
    return num / den


def lorentz_to_poincare(x) -> Tensor:
    x = _t(x)
    return x[..., 1:] / (x[..., :1] + 1.0)


def poincare_to_lorentz(p) -> Tensor:
    p = _t(p)
    p2 = ad.dot(p, p, keepdims=True)
    den = 1.0 - p2 + EPS
    return ad.concat([(1.0 + p2) / den, 2.0 * p / den], axis=-1)


class Manifold:
    """Common interface.  ``dim`` is the intrinsic dimension."""

    kind: str = ""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"dimension must be >= 1, got {dim}")
        self.dim = int(dim)

    @property
    def ambient(self) -> int:
        return self.dim

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dim={self.dim})"

    def __eq__(self, other) -> bool:
        return type(self) is type(other) and self.__dict__ == other.__dict__

    def __hash__(self):
        return hash((type(self).__name__, self.dim))

    # -- defaults shared by the conformal models ----------------------
    def origin(self, n: int | None = None) -> np.ndarray:
        shape = (self.ambient,) if n is None else (n, self.ambient)
        return np.zeros(shape)

    def tangent_project(self, x, u) -> Tensor:
        return _t(u)

    def transport(self, x_old, x_new, u) -> Tensor:
        """Move a tangent vector between points.  Identity coordinates here."""
        return _t(u)

    def activation(self, x, slope: float = 0.5) -> Tensor:
        return ad.leaky_relu(_t(x), slope)

    def logmap(self, x, y) -> Tensor:
        raise NotImplementedError

    def mobius_add(self, x, y) -> Tensor:
        raise TypeError(f"Mobius addition is defined on the Poincare ball, not {self!r}")

    def _check_pair(self, x: Tensor, y: Tensor) -> None:
        if x.shape[-1] != self.ambient or y.shape[-1] != self.ambient:
            raise ad.ShapeError(
                f"{self!r} expects {self.ambient} coordinates, got {x.shape[-1]} and {y.shape[-1]}")

    def _keep_where_zero(self, x: Tensor, v: Tensor, out: Tensor) -> Tensor:
        """Return ``x`` bit-for-bit on rows where the tangent vector is exactly zero."""
        zero = np.all(v.data == 0, axis=-1, keepdims=True)
        if not zero.any():
            return out
        return ad.where(zero, x, out)

    def _zero_where_equal(self, x: Tensor, y: Tensor, v: Tensor) -> Tensor:
        same = np.all(np.broadcast_to(x.data, np.broadcast_shapes(x.shape, y.shape)) == y.data,
                      axis=-1, keepdims=True)
        if not same.any():
            return v
        return v * (~same)

    def residual(self, x) -> np.ndarray:
        """How far each row of ``x`` is from satisfying the point constraints."""
        raise NotImplementedError

    def random_point(self, rng: np.random.Generator, n: int, scale: float = 0.5) -> np.ndarray:
        v = rng.uniform(-scale, scale, size=(n, self.dim))
        v = self.lift(v)
        return self.expmap0(v).data


class Euclidean(Manifold):
    """Flat space; optionally clipped to the closed unit ball."""

    kind = "euclidean"

    def __init__(self, dim: int, unit_ball: bool = True):
        super().__init__(dim)
        self.unit_ball = bool(unit_ball)

    def __repr__(self) -> str:
        return f"Euclidean(dim={self.dim}, unit_ball={self.unit_ball})"

    def lift(self, v):
        return _t(v)

    def distance(self, x, y) -> Tensor:
        x, y = _t(x), _t(y)
        self._check_pair(x, y)
        return ad.norm2(x - y, axis=-1)

    def expmap(self, x, v) -> Tensor:
        x, v = _t(x), _t(v)
        return self._keep_where_zero(x, v, self.project(x + v))

    def logmap(self, x, y) -> Tensor:
        x, y = _t(x), _t(y)
        self._check_pair(x, y)
        return y - x

    def expmap0(self, v) -> Tensor:
        return self.project(_t(v))

    def logmap0(self, y) -> Tensor:
        return _t(y)

    def project(self, x) -> Tensor:
        x = _t(x)
        _check_finite(x, "project")
        if not self.unit_ball:
            return x
        norm = ad.norm2(x, axis=-1, keepdims=True)
        if not np.any(norm.data > 1.0):
            return x
        return x * (1.0 / ad.clamp(norm, lo=1.0))

    def egrad2rgrad(self, x, g) -> np.ndarray:
        return np.asarray(g, dtype=np.float64)

    def sqnorm(self, x, u) -> np.ndarray:
        u = np.asarray(u)
        return (u * u).sum(axis=-1)

    def residual(self, x) -> np.ndarray:
        x = np.asarray(x)
        if not self.unit_ball:
            return np.zeros(x.shape[:-1])
        return np.maximum(np.linalg.norm(x, axis=-1) - 1.0, 0.0)


class PoincareBall(Manifold):
    """Unit Poincare ball with conformal factor 2 / (1 - |x|^2)."""

    kind = "poincare"

    def lift(self, v):
        return _t(v)

    @staticmethod
    def conformal_factor(x):
        x = _t(x)
        return 2.0 / (1.0 - ad.dot(x, x, keepdims=True) + EPS)

    def distance(self, x, y) -> Tensor:
        x, y = _t(x), _t(y)
        self._check_pair(x, y)
        diff = x - y
        num = ad.dot(diff, diff)
        den = (1.0 - ad.dot(x, x)) * (1.0 - ad.dot(y, y)) + EPS
        return ad.arcosh(1.0 + 2.0 * num / den)

    def mobius_add(self, x, y) -> Tensor:
        return mobius_add(x, y)

    def expmap(self, x, v) -> Tensor:
        x, v = _t(x), _t(v)
        norm = ad.norm2(v, axis=-1, keepdims=True)
        v, norm = _cap_norm(v, norm)
        lam = self.conformal_factor(x)
        safe = ad.clamp(norm, lo=EPS)
        step = ad.tanh(lam * safe / 2.0) / safe * v
        return self._keep_where_zero(x, v, self.project(mobius_add(x, step)))

    def logmap(self, x, y) -> Tensor:
        x, y = _t(x), _t(y)
        self._check_pair(x, y)
        w = mobius_add(-x, y)
        norm = ad.clamp(ad.norm2(w, axis=-1, keepdims=True), lo=EPS)
        lam = self.conformal_factor(x)
        out = (2.0 / lam) * ad.arctanh(norm) / norm * w
        return self._zero_where_equal(x, y, out)

    def expmap0(self, v) -> Tensor:
        v = _t(v)
        norm = ad.norm2(v, axis=-1, keepdims=True)
        v, norm = _cap_norm(v, norm)
        safe = ad.clamp(norm, lo=EPS)
        return self.project(ad.tanh(safe) / safe * v)

    def logmap0(self, y) -> Tensor:
        y = _t(y)
        safe = ad.clamp(ad.norm2(y, axis=-1, keepdims=True), lo=EPS)
        return ad.arctanh(safe) / safe * y

    def project(self, x) -> Tensor:
        x = _t(x)
        _check_finite(x, "project")
        norm = ad.norm2(x, axis=-1, keepdims=True)
        if not np.any(norm.data > BALL_MAX_NORM):
            return x
        return x * (BALL_MAX_NORM / ad.clamp(norm, lo=BALL_MAX_NORM))

    def transport(self, x_old, x_new, u) -> Tensor:
        """Rescale by the conformal-factor ratio so the Riemannian norm is kept."""
        ratio = self.conformal_factor(x_old) / self.conformal_factor(x_new)
        return _t(u) * ratio

    def egrad2rgrad(self, x, g) -> np.ndarray:
        x = np.asarray(x)
        factor = (1.0 - (x * x).sum(axis=-1, keepdims=True)) ** 2 / 4.0
        return factor * np.asarray(g)

    def sqnorm(self, x, u) -> np.ndarray:
        x, u = np.asarray(x), np.asarray(u)
        lam = 2.0 / (1.0 - (x * x).sum(axis=-1))
        return lam ** 2 * (u * u).sum(axis=-1)

    def residual(self, x) -> np.ndarray:
        return np.maximum(np.linalg.norm(np.asarray(x), axis=-1) - BALL_MAX_NORM, 0.0)


class Lorentz(Manifold):
    """Upper sheet of the hyperboloid <x, x>_L = -1 in dim + 1 coordinates."""

    kind = "lorentz"

    @property
    def ambient(self) -> int:
        return self.dim + 1

    def origin(self, n: int | None = None) -> np.ndarray:
        o = super().origin(n)
        o[..., 0] = 1.0
        return o

    def lift(self, v):
        """Pad Euclidean features with a leading zero: a tangent vector at the origin."""
        v = _t(v)
        return ad.concat([Tensor(np.zeros(v.shape[:-1] + (1,))), v], axis=-1)

    def distance(self, x, y) -> Tensor:
        x, y = _t(x), _t(y)
        self._check_pair(x, y)
        # Same value as arcosh(-<x, y>_L) since cosh(d) - 1 = |x - y|_L^2 / 2,
        # but without the cancellation near d = 0.
        diff = x - y
        sq = ad.clamp(lorentz_inner(diff, diff), lo=0.0)
        return 2.0 * ad.arsinh(0.5 * ad.sqrt(sq))

    def _lorentz_norm(self, v: Tensor) -> Tensor:
        return ad.sqrt(ad.clamp(lorentz_inner(v, v, keepdims=True), lo=0.0))

    def expmap(self, x, v) -> Tensor:
        x, v = _t(x), _t(v)
        norm = self._lorentz_norm(v)
        v, norm = _cap_norm(v, norm)
        safe = ad.clamp(norm, lo=EPS)
        out = self.project(ad.cosh(norm) * x + ad.sinh(safe) / safe * v)
        return self._keep_where_zero(x, v, out)

    def logmap(self, x, y) -> Tensor:
        x, y = _t(x), _t(y)
        self._check_pair(x, y)
        xy = lorentz_inner(x, y, keepdims=True)
        alpha = ad.clamp(-xy, lo=1.0 + EPS)
        coef = ad.arcosh(alpha) / ad.sqrt(alpha * alpha - 1.0)
        out = coef * (y + xy * x)
        out = self.tangent_project(x, out)
        return self._zero_where_equal(x, y, out)

    def expmap0(self, v) -> Tensor:
        """Exp at (1, 0, ..., 0); only the spatial part of ``v`` is used."""
        v = _t(v)
        u = v[..., 1:]
        norm = ad.norm2(u, axis=-1, keepdims=True)
        u, norm = _cap_norm(u, norm)
        safe = ad.clamp(norm, lo=EPS)
        return self.project(ad.concat([ad.cosh(norm), ad.sinh(safe) / safe * u], axis=-1))

    def logmap0(self, y) -> Tensor:
        # On the hyperboloid arcosh(y0) / sqrt(y0^2 - 1) == arsinh(|ys|) / |ys|.
        y = _t(y)
        ys = y[..., 1:]
        safe = ad.clamp(ad.norm2(ys, axis=-1, keepdims=True), lo=EPS)
        spatial = ad.arsinh(safe) / safe * ys
        return ad.concat([Tensor(np.zeros(y.shape[:-1] + (1,))), spatial], axis=-1)

    def project(self, x) -> Tensor:
        x = _t(x)
        _check_finite(x, "project")
        xs = x[..., 1:]
        x0 = ad.sqrt(1.0 + ad.dot(xs, xs, keepdims=True))
        return ad.concat([x0, xs], axis=-1)

    def tangent_project(self, x, u) -> Tensor:
        x, u = _t(x), _t(u)
        return u + lorentz_inner(x, u, keepdims=True) * x

    def transport(self, x_old, x_new, u) -> Tensor:
        """Project onto the new tangent space, then restore the original Lorentz norm.

        Plain projection adds <x_new, u>_L^2 to the squared norm, which
        inflates momentum step after step.
        """
        u = _t(u)
        moved = self.tangent_project(x_new, u)
        before = np.sqrt(np.maximum(lorentz_inner(u, u, keepdims=True).data, 0.0))
        after = np.sqrt(np.maximum(lorentz_inner(moved, moved, keepdims=True).data, 0.0))
        scale = np.where(after > 0, before / np.maximum(after, 1e-300), 1.0)
        return moved * scale

    def activation(self, x, slope: float = 0.5) -> Tensor:
        p = ad.leaky_relu(lorentz_to_poincare(x), slope)
        return self.project(poincare_to_lorentz(p))

    def egrad2rgrad(self, x, g) -> np.ndarray:
        h = np.array(g, dtype=np.float64)
        h[..., 0] *= -1.0
        return self.tangent_project(x, h).data

    def sqnorm(self, x, u) -> np.ndarray:
        return np.maximum(lorentz_inner(u, u).data, 0.0)

    def residual(self, x) -> np.ndarray:
        x = np.asarray(x)
        res = np.abs(lorentz_inner(x, x).data + 1.0)
        return np.where(x[..., 0] > 0, res, np.inf)


def get_manifold(kind: str, dim: int, unit_ball: bool = True) -> Manifold:
    kind = kind.lower()
    if kind == "euclidean":
        return Euclidean(dim, unit_ball=unit_ball)
    if kind in ("poincare", "poincareball"):
        return PoincareBall(dim)
    if kind == "lorentz":
        return Lorentz(dim)
    raise ValueError(f"unknown manifold {kind!r}; choose from {', '.join(KINDS)}")
