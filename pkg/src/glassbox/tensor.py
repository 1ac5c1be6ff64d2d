"""Dense float64 tensors with reverse-mode automatic differentiation.

The tape is dynamic: every op appends a node holding its parents and a
backward closure. Calling :meth:`Tensor.backward` on a scalar walks the
graph in reverse topological order, accumulates gradients into ``.grad``
(additively, across repeated forward/backward cycles, until
:func:`zero_grads`), and then releases the tape. Models here are tiny,
so clarity wins over speed everywhere.

Every op checks its output for NaN/Inf and raises :class:`NonFiniteError`
instead of propagating garbage.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit


class TensorError(Exception):
    """Base class for tensor failures."""


class ShapeError(TensorError):
    pass


class DomainError(TensorError):
    pass


class NonFiniteError(TensorError):
    pass


def _as_array(values) -> np.ndarray:
    return np.asarray(values, dtype=np.float64)


class Tensor:
    """A dense float64 array plus optional gradient and tape node."""

    __slots__ = ("values", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False):
        arr = _as_array(values)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor constructed with NaN/Inf values")
        self.values = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple = ()
        self._backward: Callable | None = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _from_op(values: np.ndarray, op: str, parents: Sequence["Tensor"],
                 backward: Callable) -> "Tensor":
        if not np.all(np.isfinite(values)):
            raise NonFiniteError(f"op '{op}' produced non-finite values")
        out = Tensor.__new__(Tensor)
        out.values = values
        out.grad = None
        tracked = tuple(p for p in parents if p.requires_grad or p._parents)
        if tracked:
            out.requires_grad = True
            out._parents = tracked
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        return float(self.values.item())

    def detach(self) -> "Tensor":
        """Constant copy sharing values; gradients stop here."""
        return Tensor(self.values)

    def _ensure_grad(self) -> np.ndarray:
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        return self.grad

    def zero_grad(self) -> None:
        self.grad = None

    # -- backward pass --------------------------------------------------------

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every requires_grad ancestor.

        Raises :class:`ShapeError` if called on a non-scalar. The tape is
        released afterwards; run a fresh forward pass to differentiate again.
        """
        if self.values.size != 1:
            raise ShapeError(
                f"backward requires a scalar, got shape {self.values.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        self._ensure_grad()
        self.grad += 1.0
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)
        for node in topo:
            if node is not self or node._parents:
                node._parents = ()
                node._backward = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar --------------------------------------------------------

    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, _coerce(other))


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- elementwise and binary ops ------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.values + b.values

    def backward(g):
        if a.requires_grad or a._parents:
            a._ensure_grad()
            a.grad += _unbroadcast(g, a.values.shape)
        if b.requires_grad or b._parents:
            b._ensure_grad()
            b.grad += _unbroadcast(g, b.values.shape)

    return Tensor._from_op(out, "add", (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.values - b.values

    def backward(g):
        if a.requires_grad or a._parents:
            a._ensure_grad()
            a.grad += _unbroadcast(g, a.values.shape)
        if b.requires_grad or b._parents:
            b._ensure_grad()
            b.grad -= _unbroadcast(g, b.values.shape)

    return Tensor._from_op(out, "sub", (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.values * b.values

    def backward(g):
        if a.requires_grad or a._parents:
            a._ensure_grad()
            a.grad += _unbroadcast(g * b.values, a.values.shape)
        if b.requires_grad or b._parents:
            b._ensure_grad()
            b.grad += _unbroadcast(g * a.values, b.values.shape)

    return Tensor._from_op(out, "mul", (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.values / b.values

    def backward(g):
        if a.requires_grad or a._parents:
            a._ensure_grad()
            a.grad += _unbroadcast(g / b.values, a.values.shape)
        if b.requires_grad or b._parents:
            b._ensure_grad()
            b.grad += _unbroadcast(-g * a.values / (b.values * b.values),
                                   b.values.shape)

    return Tensor._from_op(out, "div", (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product with gradient accumulation into both operands."""
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ShapeError(
            f"matmul expects 2-D operands, got {a.values.shape} and {b.values.shape}")
    if a.values.shape[1] != b.values.shape[0]:
        raise ShapeError(
            f"matmul shape mismatch: {a.values.shape} @ {b.values.shape}")
    out = a.values @ b.values

    def backward(g):
        if a.requires_grad or a._parents:
            a._ensure_grad()
            a.grad += g @ b.values.T
        if b.requires_grad or b._parents:
            b._ensure_grad()
            b.grad += a.values.T @ g

    return Tensor._from_op(out, "matmul", (a, b), backward)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.values, 0.0)

    def backward(g):
        x._ensure_grad()
        x.grad += g * (x.values > 0.0)

    return Tensor._from_op(out, "relu", (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.values)

    def backward(g):
        x._ensure_grad()
        x.grad += g * out * (1.0 - out)

    return Tensor._from_op(out, "sigmoid", (x,), backward)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.values)

    def backward(g):
        x._ensure_grad()
        x.grad += g * (1.0 - out * out)

    return Tensor._from_op(out, "tanh", (x,), backward)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.values)

    def backward(g):
        x._ensure_grad()
        x.grad += g * out

    return Tensor._from_op(out, "exp", (x,), backward)


def log(x: Tensor) -> Tensor:
    if np.any(x.values <= 0.0):
        raise DomainError("log requires strictly positive inputs")
    out = np.log(x.values)

    def backward(g):
        x._ensure_grad()
        x.grad += g / x.values

    return Tensor._from_op(out, "log", (x,), backward)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes through the interior."""
    out = np.clip(x.values, lo, hi)
    mask = (x.values >= lo) & (x.values <= hi)

    def backward(g):
        x._ensure_grad()
        x.grad += g * mask

    return Tensor._from_op(out, "clip", (x,), backward)


# -- reductions and structure ----------------------------------------------------


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.values.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x._ensure_grad()
        x.grad += np.broadcast_to(g, x.values.shape)

    return Tensor._from_op(np.asarray(out), "sum", (x,), backward)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.values.size if axis is None else x.values.shape[axis]
    out = x.values.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x._ensure_grad()
        x.grad += np.broadcast_to(g, x.values.shape) / n

    return Tensor._from_op(np.asarray(out), "mean", (x,), backward)


def take_columns(x: Tensor, indices) -> Tensor:
    """Select columns of a 2-D tensor; the backward pass scatters into place."""
    idx = np.asarray(indices, dtype=np.intp)
    if x.values.ndim != 2:
        raise ShapeError(f"take_columns expects a 2-D tensor, got {x.values.shape}")
    out = x.values[:, idx]

    def backward(g):
        x._ensure_grad()
        np.add.at(x.grad, (slice(None), idx), g)

    return Tensor._from_op(out, "take_columns", (x,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax (max subtraction) along ``axis``."""
    v = x.values
    if not (-v.ndim <= axis < v.ndim):
        raise ShapeError(f"softmax axis {axis} invalid for shape {v.shape}")
    shifted = v - v.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        x._ensure_grad()
        x.grad += out * (g - inner)

    return Tensor._from_op(out, "softmax", (x,), backward)


# -- losses ----------------------------------------------------------------------


def cross_entropy_with_logits(logits: Tensor, targets,
                              weights: np.ndarray | None = None) -> Tensor:
    """Mean (or weighted) cross-entropy in log-sum-exp form.

    ``targets`` are integer class indices of shape (n,). ``weights``, when
    given, must be non-negative and sum to 1; the default is uniform 1/n.
    """
    v = logits.values
    if v.ndim != 2:
        raise ShapeError(f"expected (n, classes) logits, got {v.shape}")
    t = np.asarray(targets, dtype=np.intp)
    if t.ndim != 1 or t.shape[0] != v.shape[0]:
        raise ShapeError(f"targets shape {t.shape} incompatible with logits {v.shape}")
    n, c = v.shape
    if np.any(t < 0) or np.any(t >= c):
        raise IndexError(f"class index out of range [0, {c}) in targets")
    if weights is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n,):
            raise ShapeError(f"weights shape {w.shape} does not match {n} rows")
    m = v.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(v - m).sum(axis=1))
    losses = lse - v[np.arange(n), t]
    out = np.asarray((w * losses).sum())

    def backward(g):
        p = np.exp(v - m)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(n), t] -= 1.0
        logits._ensure_grad()
        logits.grad += g * p * w[:, None]

    return Tensor._from_op(out, "cross_entropy", (logits,), backward)


def mse_loss(prediction: Tensor, target) -> Tensor:
    """Mean squared error against a same-shape target."""
    tgt = _coerce(target)
    if prediction.values.shape != tgt.values.shape:
        raise ShapeError(
            f"mse shapes differ: {prediction.values.shape} vs {tgt.values.shape}")
    diff = prediction.values - tgt.values
    out = np.asarray((diff * diff).mean())
    n = diff.size

    def backward(g):
        if prediction.requires_grad or prediction._parents:
            prediction._ensure_grad()
            prediction.grad += g * 2.0 * diff / n
        if tgt.requires_grad or tgt._parents:
            tgt._ensure_grad()
            tgt.grad -= g * 2.0 * diff / n

    return Tensor._from_op(out, "mse", (prediction, tgt), backward)


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


# -- finite-difference oracle ------------------------------------------------------


def gradient_check(f: Callable[..., Tensor], tensors: Sequence[Tensor],
                   h: float = 1e-6, floor: float = 1e-3) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``f`` must be a pure scalar-valued function of the given tensors; it is
    re-evaluated 2 times per parameter entry with the entry nudged by ±h.
    The denominator is floored so near-zero gradients are compared on an
    absolute scale (finite differences carry ~1e-10 noise of their own).
    """
    zero_grads(tensors)
    f(*tensors).backward()
    worst = 0.0
    for t in tensors:
        flat = t.values.reshape(-1)
        fd = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = f(*tensors).item()
            flat[i] = orig - h
            lo = f(*tensors).item()
            flat[i] = orig
            fd[i] = (hi - lo) / (2.0 * h)
        ad = (t.grad if t.grad is not None else np.zeros_like(t.values)).reshape(-1)
        denom = np.maximum(np.maximum(np.abs(ad), np.abs(fd)), floor)
        worst = max(worst, float(np.max(np.abs(ad - fd) / denom)))
    return worst
