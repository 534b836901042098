"""Eager reverse-mode automatic differentiation on dense float64 arrays.

Every operation builds a :class:`Tensor` that remembers its parents and a
closure mapping the output gradient onto parent gradients.  Calling
:func:`backward` on a scalar walks the recorded graph in reverse topological
order.  The tape is built fresh on every forward pass and never reused.

Shapes follow numpy broadcasting; gradients are summed back onto the
original operand shapes.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

# Domain handling for the edge-sensitive scalar functions.
EPS = 1e-15
DOMAIN_TOL = 1e-6


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class DomainError(ValueError):
    """An input lies outside a function's domain beyond the clamp tolerance."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


def _as_array(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    return arr


class Tensor:
    """A node on the autodiff tape.

    ``data`` holds the value, ``grad`` the accumulated gradient (same shape,
    zero-initialised).  Leaf tensors created by the user keep their gradients
    across calls to :func:`backward`; call :meth:`zero_grad` to reset them.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None,
                 _parents: Sequence["Tensor"] = (), _backward: Optional[Callable] = None,
                 op: str = "leaf"):
        self.data = _as_array(data)
        if self.data.ndim == 0:
            self.data = self.data.reshape(())
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents = tuple(_parents)
        self._backward = _backward
        self.op = op
        self.name = name

    # -- conveniences -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    # -- operators ----------------------------------------------------
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)
    def __pow__(self, exponent): return power(self, exponent)
    def __getitem__(self, index): return getitem(self, index)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def tensor(data, requires_grad: bool = False, name: Optional[str] = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _finite(out: np.ndarray, op: str, operands: Iterable[Tensor]) -> None:
    if not np.isfinite(out).all():
        names = [t.name for t in operands if t.name]
        where = f" (inputs: {', '.join(names)})" if names else ""
        raise NonFiniteError(f"non-finite value produced by '{op}'{where}")


def _make(out: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    _finite(out, op, parents)
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(out, op=op)
    return Tensor(out, requires_grad=True, _parents=parents, _backward=backward, op=op)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad = t.grad + _unbroadcast(g, t.data.shape)


def _broadcast_shapes(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from exc


# -- elementwise binary -----------------------------------------------

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _broadcast_shapes(a, b, "add")

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g)
    return _make(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _broadcast_shapes(a, b, "sub")

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, -g)
    return _make(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _broadcast_shapes(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * b.data)
        if b.requires_grad:
            _accumulate(b, g * a.data)
    return _make(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    """Elementwise quotient.  Denominators must be nonzero."""
    a, b = _wrap(a), _wrap(b)
    _broadcast_shapes(a, b, "div")
    if np.any(b.data == 0):
        raise DomainError("div: zero denominator")
    out = a.data / b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g / b.data)
        if b.requires_grad:
            _accumulate(b, -g * out / b.data)
    return _make(out, (a, b), backward, "div")


def neg(a) -> Tensor:
    a = _wrap(a)

    def backward(g):
        _accumulate(a, -g)
    return _make(-a.data, (a,), backward, "neg")


def power(a, exponent: float) -> Tensor:
    a = _wrap(a)
    p = float(exponent)
    out = a.data ** p

    def backward(g):
        _accumulate(a, g * p * a.data ** (p - 1.0))
    return _make(out, (a,), backward, f"pow{p:g}")


def square(a) -> Tensor:
    a = _wrap(a)

    def backward(g):
        _accumulate(a, 2.0 * g * a.data)
    return _make(a.data * a.data, (a,), backward, "square")


# -- linear algebra ---------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)
    return _make(a.data @ b.data, (a, b), backward, "matmul")


def spmm(matrix: sp.spmatrix, b) -> Tensor:
    """Product of a constant sparse matrix with a dense tensor."""
    b = _wrap(b)
    if b.ndim != 2 or matrix.shape[1] != b.shape[0]:
        raise ShapeError(f"spmm: cannot multiply {matrix.shape} by {b.shape}")
    out = np.asarray(matrix @ b.data)

    def backward(g):
        _accumulate(b, np.asarray(matrix.T @ g))
    return _make(out, (b,), backward, "spmm")


def transpose(a) -> Tensor:
    a = _wrap(a)

    def backward(g):
        _accumulate(a, g.T)
    return _make(a.data.T, (a,), backward, "transpose")


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    original = a.shape

    def backward(g):
        _accumulate(a, g.reshape(original))
    return _make(a.data.reshape(shape), (a,), backward, "reshape")


def getitem(a, index) -> Tensor:
    """Basic or integer-array indexing; repeated indices accumulate."""
    a = _wrap(a)
    out = a.data[index]

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, index, g)
            a.grad = a.grad + full
    return _make(np.array(out, dtype=np.float64), (a,), backward, "getitem")


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of an empty list")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from exc
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, sizes, axis=axis)):
            _accumulate(t, piece)
    return _make(out, tensors, backward, "concat")


# -- elementwise unary ------------------------------------------------

def tanh(a) -> Tensor:
    a = _wrap(a)
    out = np.tanh(a.data)

    def backward(g):
        _accumulate(a, g * (1.0 - out * out))
    return _make(out, (a,), backward, "tanh")


def arctanh(a) -> Tensor:
    a = _wrap(a)
    if np.any(np.abs(a.data) > 1.0 + DOMAIN_TOL):
        raise DomainError("arctanh: |x| > 1")
    x = np.clip(a.data, -1.0 + EPS, 1.0 - EPS)

    def backward(g):
        _accumulate(a, g / (1.0 - x * x))
    return _make(np.arctanh(x), (a,), backward, "arctanh")


def cosh(a) -> Tensor:
    a = _wrap(a)

    def backward(g):
        _accumulate(a, g * np.sinh(a.data))
    return _make(np.cosh(a.data), (a,), backward, "cosh")


def sinh(a) -> Tensor:
    a = _wrap(a)

    def backward(g):
        _accumulate(a, g * np.cosh(a.data))
    return _make(np.sinh(a.data), (a,), backward, "sinh")


def arcosh(a) -> Tensor:
    a = _wrap(a)
    if np.any(a.data < 1.0 - DOMAIN_TOL):
        raise DomainError("arcosh: x < 1")
    x = np.maximum(a.data, 1.0 + EPS)
    active = a.data >= 1.0 + EPS

    def backward(g):
        # Zero where clamped: the derivative is unbounded at 1.
        _accumulate(a, np.where(active, g / np.sqrt(x * x - 1.0), 0.0))
    # The value uses the exact boundary so that arcosh(1) == 0.
    return _make(np.arccosh(np.maximum(a.data, 1.0)), (a,), backward, "arcosh")


def arsinh(a) -> Tensor:
    a = _wrap(a)

    def backward(g):
        _accumulate(a, g / np.sqrt(a.data * a.data + 1.0))
    return _make(np.arcsinh(a.data), (a,), backward, "arsinh")


def sqrt(a) -> Tensor:
    a = _wrap(a)
    if np.any(a.data < -DOMAIN_TOL):
        raise DomainError("sqrt: x < 0")
    out = np.sqrt(np.maximum(a.data, 0.0))

    def backward(g):
        _accumulate(a, g / (2.0 * out + EPS))
    return _make(out, (a,), backward, "sqrt")


def exp(a) -> Tensor:
    a = _wrap(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)

    def backward(g):
        _accumulate(a, g * out)
    return _make(out, (a,), backward, "exp")


def log(a) -> Tensor:
    a = _wrap(a)
    if np.any(a.data <= 0):
        raise DomainError("log: x <= 0")

    def backward(g):
        _accumulate(a, g / a.data)
    return _make(np.log(a.data), (a,), backward, "log")


def leaky_relu(a, slope: float = 0.5) -> Tensor:
    a = _wrap(a)
    scale = np.where(a.data >= 0, 1.0, slope)

    def backward(g):
        _accumulate(a, g * scale)
    return _make(a.data * scale, (a,), backward, "leaky_relu")


def clamp(a, lo: Optional[float] = None, hi: Optional[float] = None) -> Tensor:
    """Clip values; the gradient is zero wherever clipping was active."""
    a = _wrap(a)
    out = np.clip(a.data, lo, hi)
    passed = out == a.data

    def backward(g):
        _accumulate(a, g * passed)
    return _make(out, (a,), backward, "clamp")


def where(mask, a, b) -> Tensor:
    """Select ``a`` where the constant boolean ``mask`` holds, else ``b``."""
    a, b = _wrap(a), _wrap(b)
    mask = np.asarray(mask, dtype=bool)

    def backward(g):
        _accumulate(a, np.where(mask, g, 0.0))
        _accumulate(b, np.where(mask, 0.0, g))
    return _make(np.where(mask, a.data, b.data), (a, b), backward, "where")


# -- reductions -------------------------------------------------------

def _check_axis(a: Tensor, axis) -> None:
    if a.data.size == 0:
        raise ShapeError("reduction over an empty tensor")
    if axis is not None and not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"axis {axis} out of range for shape {a.shape}")


def sum(a, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = _wrap(a)
    _check_axis(a, axis)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape))
    return _make(np.asarray(out), (a,), backward, "sum")


def mean(a, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    _check_axis(a, axis)
    count = a.data.size if axis is None else a.shape[axis]
    return sum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def norm2(a, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    """Euclidean norm; the gradient at the zero vector is taken as zero."""
    a = _wrap(a)
    _check_axis(a, axis)
    out = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True))

    def backward(g):
        if axis is None or not keepdims:
            g = np.reshape(g, out.shape)
        _accumulate(a, g * a.data / (out + EPS))
    result = out if keepdims else (out.reshape(()) if axis is None else out.squeeze(axis))
    return _make(result, (a,), backward, "norm2")


def softmax(a, axis: int = -1) -> Tensor:
    a = _wrap(a)
    _check_axis(a, axis)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        _accumulate(a, out * (g - inner))
    return _make(out, (a,), backward, "softmax")


def dot(a, b, axis: int = -1, keepdims: bool = False) -> Tensor:
    return sum(mul(a, b), axis=axis, keepdims=keepdims)


# -- driver -----------------------------------------------------------

def _topological(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d loss / d leaf into every reachable leaf's ``grad``."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topological(loss)
    for node in order:
        if node._parents:
            node.grad = np.zeros_like(node.data)
    loss.grad = loss.grad + np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


def numerical_grad(fn: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = fn(x)
        flat[i] = orig - step
        down = fn(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * step)
    return grad
