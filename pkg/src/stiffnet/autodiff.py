"""Float64 tensor engine with reverse-mode automatic differentiation.

Define-by-run: each operation stores its parent tensors and a gradient
closure on the result, so the graph built during the forward pass doubles
as the tape. ``Tensor.backward()`` walks that graph exactly once in
reverse topological order, accumulating gradients into every tensor
created with ``requires_grad=True``.

Single-threaded per graph; tensors that do not participate in gradients
are immutable by convention and safe to share between threads.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (forward-only evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class ShapeMismatchError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class Tensor:
    """Dense n-dimensional float64 array, optionally tracked for gradients."""

    __slots__ = ("data", "grad", "requires_grad", "_prev", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._prev: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Reverse-accumulate d(self)/d(leaf) into every tracked leaf.

        The root must be a scalar. Each node's closure runs exactly once.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward() requires a scalar root, got shape {self.data.shape}"
            )
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, emitted = stack.pop()
            if emitted:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._prev:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, _coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not supported; multiply by a reciprocal")
        return mul(self, Tensor(1.0 / float(other)))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_op(data: np.ndarray, parents: Sequence[Tensor],
            backward: Callable[[np.ndarray], None]) -> Tensor:
    """Wrap an op result, recording parents and the gradient closure.

    Recording is skipped when no parent needs gradients or recording is
    globally disabled, so forward-only evaluation builds no graph.
    """
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._prev = tuple(parents)
        out._backward = backward
    return out


def accumulate_grad(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over axes that numpy broadcasting expanded."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_check(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeMismatchError(
            f"{op}: shapes {a.data.shape} and {b.data.shape} do not broadcast"
        ) from None


# -- arithmetic ----------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a, b, "add")

    def backward(g):
        accumulate_grad(a, _unbroadcast(g, a.data.shape))
        accumulate_grad(b, _unbroadcast(g, b.data.shape))

    return make_op(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a, b, "sub")

    def backward(g):
        accumulate_grad(a, _unbroadcast(g, a.data.shape))
        accumulate_grad(b, _unbroadcast(-g, b.data.shape))

    return make_op(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a, b, "mul")

    def backward(g):
        accumulate_grad(a, _unbroadcast(g * b.data, a.data.shape))
        accumulate_grad(b, _unbroadcast(g * a.data, b.data.shape))

    return make_op(a.data * b.data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with broadcasting over leading axes."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeMismatchError(
            f"matmul requires 2-d or higher operands, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeMismatchError(
            f"matmul: inner extents differ, {a.data.shape} vs {b.data.shape}"
        )

    def backward(g):
        accumulate_grad(a, _unbroadcast(g @ b.data.swapaxes(-1, -2), a.data.shape))
        accumulate_grad(b, _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.data.shape))

    return make_op(a.data @ b.data, (a, b), backward)


# -- shape manipulation --------------------------------------------------


def reshape(t: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def backward(g):
        accumulate_grad(t, g.reshape(t.data.shape))

    return make_op(t.data.reshape(shape), (t,), backward)


def transpose(t: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        accumulate_grad(t, g.transpose(inverse))

    return make_op(t.data.transpose(axes), (t,), backward)


def broadcast_to(t: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def backward(g):
        accumulate_grad(t, _unbroadcast(g, t.data.shape))

    return make_op(np.broadcast_to(t.data, shape).copy(), (t,), backward)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = list(tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            accumulate_grad(t, g[tuple(idx)])

    return make_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def getitem(t: Tensor, idx) -> Tensor:

    def backward(g):
        if t.requires_grad:
            full = np.zeros_like(t.data)
            np.add.at(full, idx, g)
            accumulate_grad(t, full)

    return make_op(t.data[idx].copy(), (t,), backward)


# -- reductions ----------------------------------------------------------


def tsum(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:

    def backward(g):
        if axis is None:
            accumulate_grad(t, np.broadcast_to(g, t.data.shape).copy())
        else:
            gx = g if keepdims else np.expand_dims(g, axis)
            accumulate_grad(t, np.broadcast_to(gx, t.data.shape).copy())

    return make_op(t.data.sum(axis=axis, keepdims=keepdims), (t,), backward)


def tmean(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = t.data.size if axis is None else t.data.shape[axis]

    def backward(g):
        if axis is None:
            accumulate_grad(t, np.broadcast_to(g / count, t.data.shape).copy())
        else:
            gx = g if keepdims else np.expand_dims(g, axis)
            accumulate_grad(t, np.broadcast_to(gx / count, t.data.shape).copy())

    return make_op(t.data.mean(axis=axis, keepdims=keepdims), (t,), backward)


# -- nonlinearities ------------------------------------------------------


def sigmoid(t: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-t.data))

    def backward(g):
        accumulate_grad(t, g * s * (1.0 - s))

    return make_op(s, (t,), backward)


def silu(t: Tensor) -> Tensor:
    """x * sigmoid(x)."""
    s = 1.0 / (1.0 + np.exp(-t.data))
    y = t.data * s

    def backward(g):
        accumulate_grad(t, g * (s + y * (1.0 - s)))

    return make_op(y, (t,), backward)


def tanh(t: Tensor) -> Tensor:
    y = np.tanh(t.data)

    def backward(g):
        accumulate_grad(t, g * (1.0 - y * y))

    return make_op(y, (t,), backward)


def clamp(t: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes only where the input lies inside."""
    mask = (t.data >= lo) & (t.data <= hi)

    def backward(g):
        accumulate_grad(t, g * mask)

    return make_op(np.clip(t.data, lo, hi), (t,), backward)


def softmax_lastdim(t: Tensor) -> Tensor:
    """Numerically stable softmax over the last axis; rows sum to 1."""
    shifted = t.data - t.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * s).sum(axis=-1, keepdims=True)
        accumulate_grad(t, s * (g - dot))

    return make_op(s, (t,), backward)


def layernorm_lastdim(t: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize the last axis to mean 0, variance 1 (no affine part)."""
    mu = t.data.mean(axis=-1, keepdims=True)
    var = t.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (t.data - mu) * inv

    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        accumulate_grad(t, inv * (g - gm - xhat * gx))

    return make_op(xhat, (t,), backward)
