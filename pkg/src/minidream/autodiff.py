"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tensor wraps a numpy array. Every primitive op records itself on the
implicit tape (the operand graph) when gradient recording is enabled;
``backward(loss)`` replays the tape in reverse topological order and
accumulates ``.grad`` on every tensor that participates in the graph.

All math is float64. Checkpoints quantize to float32 (see checkpoint.py);
nothing here ever computes in reduced precision.
"""
from __future__ import annotations

import contextlib
from typing import Iterable, Optional, Sequence

import numpy as np

from minidream import kernels


class ShapeError(ValueError):
    pass


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (inference fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_back", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = _as_array(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._back = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad}, name={self.name!r})"

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(_wrap(other), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out: Tensor, parents: Sequence[Tensor], back) -> Tensor:
    if _grad_enabled and any(p.requires_grad or p._parents for p in parents):
        out._parents = tuple(parents)
        out._back = back
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- primitives --------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data + b.data)

    def back(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))

    return _record(out, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data * b.data)

    def back(g):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _record(out, (a, b), back)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data)

    def back(g):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)

    return _record(out, (a, b), back)


def tanh(a) -> Tensor:
    a = _wrap(a)
    y = np.tanh(a.data)
    out = Tensor(y)

    def back(g):
        a._accumulate(g * (1.0 - y * y))

    return _record(out, (a,), back)


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    y = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-a.data)),
                 np.exp(a.data) / (1.0 + np.exp(a.data)))
    out = Tensor(y)

    def back(g):
        a._accumulate(g * y * (1.0 - y))

    return _record(out, (a,), back)


def relu(a) -> Tensor:
    a = _wrap(a)
    mask = a.data > 0
    out = Tensor(np.where(mask, a.data, 0.0))

    def back(g):
        a._accumulate(g * mask)

    return _record(out, (a,), back)


def exp(a) -> Tensor:
    a = _wrap(a)
    y = np.exp(a.data)
    out = Tensor(y)

    def back(g):
        a._accumulate(g * y)

    return _record(out, (a,), back)


def log(a) -> Tensor:
    a = _wrap(a)
    out = Tensor(np.log(a.data))

    def back(g):
        a._accumulate(g / a.data)

    return _record(out, (a,), back)


def square(a) -> Tensor:
    a = _wrap(a)
    out = Tensor(a.data * a.data)

    def back(g):
        a._accumulate(g * 2.0 * a.data)

    return _record(out, (a,), back)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def back(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.data.shape).copy())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(gg, a.data.shape).copy())

    return _record(out, (a,), back)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    out = Tensor(a.data.reshape(shape))

    def back(g):
        a._accumulate(g.reshape(a.data.shape))

    return _record(out, (a,), back)


def transpose(a, axes=None) -> Tensor:
    a = _wrap(a)
    out = Tensor(a.data.transpose(axes))

    def back(g):
        if axes is None:
            a._accumulate(g.transpose())
        else:
            a._accumulate(g.transpose(np.argsort(axes)))

    return _record(out, (a,), back)


def take(a, idx) -> Tensor:
    """Basic (view-style) indexing with gradient scatter."""
    a = _wrap(a)
    out = Tensor(a.data[idx])

    def back(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        np.add.at(a.grad, idx, g)

    return _record(out, (a,), back)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in ts], axis=axis))
    sizes = [t.data.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        for t, piece in zip(ts, np.split(g, splits, axis=axis)):
            t._accumulate(piece)

    return _record(out, tuple(ts), back)


def logsumexp(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Overflow-safe log(sum(exp(a))) with the softmax gradient."""
    a = _wrap(a)
    m = a.data.max(axis=axis, keepdims=True)
    s = np.exp(a.data - m).sum(axis=axis, keepdims=True)
    y = m + np.log(s)
    soft = np.exp(a.data - y)
    out = Tensor(y if keepdims else np.squeeze(y, axis=axis))

    def back(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        a._accumulate(gg * soft)

    return _record(out, (a,), back)


def softmax(a, axis: int = -1) -> Tensor:
    a = _wrap(a)
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def back(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        a._accumulate(y * (g - dot))

    return _record(out, (a,), back)


def conv2d(x, w, stride: int) -> Tensor:
    """Valid cross-correlation. x: (N,CI,H,W), w: (CO,CI,K,K)."""
    x, w = _wrap(x), _wrap(w)
    if x.data.ndim != 4 or w.data.ndim != 4 or x.data.shape[1] != w.data.shape[1]:
        raise ShapeError(f"conv2d shape mismatch: x {x.data.shape}, w {w.data.shape}")
    k = w.data.shape[2]
    if x.data.shape[2] < k or x.data.shape[3] < k:
        raise ShapeError(f"conv2d input {x.data.shape} smaller than filter {w.data.shape}")
    out = Tensor(kernels.corr_fwd(x.data, w.data, stride))

    def back(g):
        x._accumulate(kernels.corr_grad_x(g, w.data, stride,
                                          x.data.shape[2], x.data.shape[3]))
        w._accumulate(kernels.corr_grad_w(x.data, g, stride, k))

    return _record(out, (x, w), back)


def deconv2d(x, w, stride: int) -> Tensor:
    """Transposed convolution. x: (N,CI,H,W), w: (CI,CO,K,K).

    Output spatial size is (H-1)*stride + K, the exact inverse of a valid
    stride-`stride` convolution whose input size satisfied (H-K) % stride == 0.
    """
    x, w = _wrap(x), _wrap(w)
    if x.data.ndim != 4 or w.data.ndim != 4 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"deconv2d shape mismatch: x {x.data.shape}, w {w.data.shape}")
    k = w.data.shape[2]
    ho = (x.data.shape[2] - 1) * stride + k
    wo = (x.data.shape[3] - 1) * stride + k
    out = Tensor(kernels.corr_grad_x(x.data, w.data, stride, ho, wo))

    def back(g):
        # corr_fwd contracts g's CO channels against w's axis 1, yielding CI.
        x._accumulate(kernels.corr_fwd(g, w.data, stride))
        w._accumulate(kernels.corr_grad_w(g, x.data, stride, k))

    return _record(out, (x, w), back)


# -- backward ----------------------------------------------------------------

def backward(loss: Tensor):
    """Replay the tape reachable from `loss` in reverse topological order."""
    if loss.data.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("backward called on non-finite loss")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss._accumulate(np.ones_like(loss.data))
    for node in reversed(topo):
        if node._back is not None and node.grad is not None:
            node._back(node.grad)


def parameters_zero_grad(params: Iterable[Tensor]):
    for p in params:
        p.zero_grad()
