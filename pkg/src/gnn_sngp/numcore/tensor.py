"""Reverse-mode differentiation over a fixed set of dense primitives.

Every op checks its output for NaN/Inf and raises ``NonFiniteError`` instead
of letting bad values leak into metrics downstream.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class NonFiniteError(FloatingPointError):
    pass


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None, op=""):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(op={self.op or 'leaf'}, shape={self.shape})"

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a seed gradient needs a scalar")
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _finite(a: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(a).all():
        raise NonFiniteError(f"non-finite value produced by {op}")
    return a


def _node(data, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    rg = any(p.requires_grad for p in parents)
    return Tensor(_finite(data, op), rg, tuple(parents) if rg else (), backward if rg else None, op)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _same_or_broadcast(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# --- primitives -----------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    A, B = a.data, b.data
    return _node(A @ B, (a, b), lambda g: (g @ B.T, A.T @ g), "matmul")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_or_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _node(
        a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add"
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_or_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _node(
        a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)), "sub"
    )


def mul(a, b) -> Tensor:
    """Hadamard product."""
    a, b = as_tensor(a), as_tensor(b)
    _same_or_broadcast(a, b, "mul")
    A, B = a.data, b.data
    return _node(
        A * B,
        (a, b),
        lambda g: (_unbroadcast(g * B, A.shape), _unbroadcast(g * A, B.shape)),
        "mul",
    )


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _node(a.data * c, (a,), lambda g: (g * c,), "scale")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    s = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)
    return _node(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    t = np.tanh(a.data)
    return _node(t, (a,), lambda g: (g * (1.0 - t * t),), "tanh")


def cos(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return _node(np.cos(x), (a,), lambda g: (-g * np.sin(x),), "cos")


def concat(parts: Sequence, axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat of nothing")
    nd = parts[0].data.ndim
    ax = axis % nd
    for p in parts:
        if p.data.ndim != nd or any(
            p.shape[i] != parts[0].shape[i] for i in range(nd) if i != ax
        ):
            raise ShapeError(f"concat: shapes {[q.shape for q in parts]}")
    cuts = np.cumsum([p.shape[ax] for p in parts])[:-1]
    return _node(
        np.concatenate([p.data for p in parts], axis=ax),
        parts,
        lambda g: tuple(np.split(g, cuts, axis=ax)),
        "concat",
    )


def gather_rows(a, index: np.ndarray) -> Tensor:
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)
    n = a.shape[0]
    if index.size and (index.min() < 0 or index.max() >= n):
        raise ShapeError("gather_rows: index out of range")

    def back(g):
        out = np.zeros((n,) + g.shape[1:], dtype=g.dtype)
        np.add.at(out, index, g)
        return (out,)

    return _node(a.data[index], (a,), back, "gather_rows")


def segment_sum(a, segment_ids: np.ndarray, n_segments: int) -> Tensor:
    """Sum rows of ``a`` into ``n_segments`` buckets (sum-over-rows per segment)."""
    a = as_tensor(a)
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    if segment_ids.shape != (a.shape[0],):
        raise ShapeError(f"segment_sum: {segment_ids.shape} ids for {a.shape[0]} rows")
    if segment_ids.size and (segment_ids.min() < 0 or segment_ids.max() >= n_segments):
        raise ShapeError("segment_sum: segment id out of range")
    out = np.zeros((n_segments,) + a.shape[1:], dtype=a.data.dtype)
    np.add.at(out, segment_ids, a.data)
    return _node(out, (a,), lambda g: (g[segment_ids],), "segment_sum")


def sum_rows(a) -> Tensor:
    a = as_tensor(a)
    n = a.shape[0]
    return _node(
        a.data.sum(axis=0, keepdims=True),
        (a,),
        lambda g: (np.broadcast_to(g, (n,) + g.shape[1:]).copy(),),
        "sum_rows",
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of integer ``labels`` under row-wise softmax."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"softmax_cross_entropy: logits {logits.shape}, labels {labels.shape}")
    n = labels.size
    rows = np.arange(n)
    lp = log_softmax(logits.data)
    loss = -lp[rows, labels].mean()

    def back(g):
        d = np.exp(lp)
        d[rows, labels] -= 1.0
        return (d * (g / n),)

    return _node(np.asarray(loss, dtype=logits.data.dtype), (logits,), back, "softmax_xent")
