"""Reverse-mode accumulation over a fixed op set.

Var wraps an ndarray and remembers how it was made. backward() walks the
graph once in reverse topological order. There is no general tape beyond
this: each op hand-derives its adjoint, and anything outside the closed
set has to be composed from it.

An allocation counter can be armed around a code region to measure how
many array elements the region materializes; the memory report uses it
instead of OS-level numbers.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from ..errors import DimensionError

_ALLOC = {"armed": False, "elements": 0}


@contextmanager
def count_allocations():
    """Count elements of every Var value allocated inside the block."""
    prev_armed = _ALLOC["armed"]
    prev_count = _ALLOC["elements"]
    _ALLOC["armed"] = True
    _ALLOC["elements"] = 0
    box = {}
    try:
        yield box
    finally:
        box["elements"] = _ALLOC["elements"]
        _ALLOC["armed"] = prev_armed
        _ALLOC["elements"] = prev_count


class Var:
    """A node in the computation graph."""

    __slots__ = ("value", "grad", "_parents", "_bwd")

    def __init__(self, value, parents=(), bwd=None):
        self.value = np.asarray(value)
        self.grad = None
        self._parents = parents
        self._bwd = bwd
        if _ALLOC["armed"]:
            _ALLOC["elements"] += self.value.size

    @property
    def shape(self):
        return self.value.shape

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.value, dtype=np.float64)
        self.grad += g


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def backward(root: Var, seed=1.0):
    """Propagate d(root)/d(node) into .grad over the whole graph."""
    topo = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    root.accumulate(np.broadcast_to(np.asarray(seed, dtype=np.float64), root.shape))
    for node in reversed(topo):
        if node._bwd is not None and node.grad is not None:
            node._bwd(node.grad)


def _unbroadcast(g, shape):
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = Var(a.value + b.value, (a, b))

    def bwd(g):
        a.accumulate(_unbroadcast(g, a.shape))
        b.accumulate(_unbroadcast(g, b.shape))

    out._bwd = bwd
    return out


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = Var(a.value * b.value, (a, b))

    def bwd(g):
        a.accumulate(_unbroadcast(g * b.value, a.shape))
        b.accumulate(_unbroadcast(g * a.value, b.shape))

    out._bwd = bwd
    return out


def scale(a, s: float) -> Var:
    a = as_var(a)
    out = Var(a.value * s, (a,))
    out._bwd = lambda g: a.accumulate(g * s)
    return out


def sub(a, b) -> Var:
    return add(a, scale(b, -1.0))


def matmul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise DimensionError(
            f"matmul expects 2-d operands, got {a.value.shape} and {b.value.shape}"
        )
    if a.value.shape[1] != b.value.shape[0]:
        raise DimensionError(
            f"matmul inner dimensions disagree: {a.value.shape} x {b.value.shape}"
        )
    out = Var(a.value @ b.value, (a, b))

    def bwd(g):
        a.accumulate(g @ b.value.T)
        b.accumulate(a.value.T @ g)

    out._bwd = bwd
    return out


def matmul_bt(a, b) -> Var:
    """a @ b.T without materializing the transpose."""
    a, b = as_var(a), as_var(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise DimensionError(
            f"matmul_bt expects 2-d operands, got {a.value.shape} and {b.value.shape}"
        )
    if a.value.shape[1] != b.value.shape[1]:
        raise DimensionError(
            f"matmul_bt width mismatch: {a.value.shape} vs {b.value.shape}"
        )
    out = Var(a.value @ b.value.T, (a, b))

    def bwd(g):
        a.accumulate(g @ b.value)
        b.accumulate(g.T @ a.value)

    out._bwd = bwd
    return out


def transpose(a) -> Var:
    a = as_var(a)
    out = Var(a.value.T, (a,))
    out._bwd = lambda g: a.accumulate(g.T)
    return out


def reshape(a, shape) -> Var:
    a = as_var(a)
    out = Var(a.value.reshape(shape), (a,))
    out._bwd = lambda g: a.accumulate(g.reshape(a.shape))
    return out


def permute(a, axes) -> Var:
    a = as_var(a)
    axes = tuple(int(x) for x in axes)
    if sorted(axes) != list(range(a.value.ndim)):
        raise DimensionError(f"axes {axes} is not a permutation for ndim {a.value.ndim}")
    inverse = np.argsort(axes)
    out = Var(np.transpose(a.value, axes), (a,))
    out._bwd = lambda g: a.accumulate(np.transpose(g, inverse))
    return out


def concat(parts, axis=0) -> Var:
    parts = [as_var(p) for p in parts]
    out = Var(np.concatenate([p.value for p in parts], axis=axis), tuple(parts))
    sizes = [p.value.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            p.accumulate(g[tuple(sl)])

    out._bwd = bwd
    return out


def slice_rows(a, start: int, stop: int) -> Var:
    a = as_var(a)
    out = Var(a.value[start:stop], (a,))

    def bwd(g):
        ga = np.zeros_like(a.value, dtype=np.float64)
        ga[start:stop] = g
        a.accumulate(ga)

    out._bwd = bwd
    return out


def slice_cols(a, start: int, stop: int) -> Var:
    a = as_var(a)
    out = Var(a.value[:, start:stop], (a,))

    def bwd(g):
        ga = np.zeros_like(a.value, dtype=np.float64)
        ga[:, start:stop] = g
        a.accumulate(ga)

    out._bwd = bwd
    return out


def gather_rows(a, indices) -> Var:
    a = as_var(a)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise DimensionError(f"gather_rows expects a flat index list, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.value.shape[0]):
        raise DimensionError(
            f"gather_rows index out of range for {a.value.shape[0]} rows"
        )
    out = Var(a.value[idx], (a,))

    def bwd(g):
        ga = np.zeros_like(a.value, dtype=np.float64)
        np.add.at(ga, idx, g)
        a.accumulate(ga)

    out._bwd = bwd
    return out


def softmax_rows_var(a) -> Var:
    a = as_var(a)
    x = a.value
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Var(y, (a,))

    def bwd(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        a.accumulate(y * (g - dot))

    out._bwd = bwd
    return out


def relu(a) -> Var:
    a = as_var(a)
    out = Var(np.maximum(a.value, 0.0), (a,))
    out._bwd = lambda g: a.accumulate(g * (a.value > 0.0))
    return out


def layer_norm(a, gain, bias, eps: float = 1e-6) -> Var:
    """Row-wise normalization over the last axis with affine parameters."""
    a, gain, bias = as_var(a), as_var(gain), as_var(bias)
    x = a.value
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Var(xhat * gain.value + bias.value, (a, gain, bias))

    def bwd(g):
        gain.accumulate(_unbroadcast(g * xhat, gain.shape))
        bias.accumulate(_unbroadcast(g, bias.shape))
        gx = g * gain.value
        n = x.shape[-1]
        a.accumulate(
            inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).sum(axis=-1, keepdims=True) / n)
        )

    out._bwd = bwd
    return out


def mean_axis0(a) -> Var:
    a = as_var(a)
    n = a.value.shape[0]
    out = Var(a.value.mean(axis=0), (a,))
    out._bwd = lambda g: a.accumulate(np.broadcast_to(g / n, a.shape).copy())
    return out


def sum_all(a) -> Var:
    a = as_var(a)
    out = Var(a.value.sum(), (a,))
    out._bwd = lambda g: a.accumulate(np.broadcast_to(g, a.shape).copy())
    return out


def abs_(a) -> Var:
    a = as_var(a)
    out = Var(np.abs(a.value), (a,))
    out._bwd = lambda g: a.accumulate(g * np.sign(a.value))
    return out


def clamp(a, lo: float, hi: float) -> Var:
    a = as_var(a)
    out = Var(np.clip(a.value, lo, hi), (a,))
    out._bwd = lambda g: a.accumulate(g * ((a.value > lo) & (a.value < hi)))
    return out
