"""Reverse-mode differentiation over numpy arrays.

Each op returns a :class:`Tensor` that remembers its parents and a closure
mapping the output gradient to parent gradients. ``Tensor.backward`` walks the
graph in reverse topological order and *accumulates* into ``.grad`` of every
leaf that requires it, so call :meth:`Tensor.zero_grad` between steps.

Arithmetic keeps the dtype of its inputs: build float64 leaves for gradient
checks and float32 ones for training.
"""
from __future__ import annotations

import os

import numpy as np

DEBUG = os.environ.get("VOXFRAC_DEBUG", "") not in ("", "0")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        self.data = np.asarray(data)
        if self.data.dtype.kind != "f":
            self.data = self.data.astype(np.float32)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward
        self.name = name
        if DEBUG and not np.isfinite(self.data).all():
            raise FloatingPointError(f"non-finite values produced ({name or 'tensor'})")

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    @property
    def is_leaf(self):
        return not self._parents

    def backward(self, grad=None):
        if not self.requires_grad:
            raise RuntimeError("backward() on a tensor that is not attached to any parameter")
        if grad is None:
            if self.data.size != 1:
                raise RuntimeError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topo(self)
        grads = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operators -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_wrap(other, self.dtype)))

    def __rsub__(self, other):
        return add(_wrap(other, self.dtype), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, scalar):
        return mul(self, 1.0 / scalar)

    def sum(self):
        return tsum(self)

    def mean(self):
        return mean(self)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)


def _topo(root):
    order, seen = [], set()
    stack = [(root, False)]
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
    return order


def _wrap(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else np.float32))


def _make(data, parents, backward, name=None):
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, name=name, _parents=parents if req else (),
                  _backward=backward if req else None)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# elementwise ------------------------------------------------------------


def add(a, b):
    a = _wrap(a)
    b = _wrap(b, a.dtype)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def neg(a):
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b):
    a = _wrap(a)
    b = _wrap(b, a.dtype)
    ad, bd = a.data, b.data

    def back(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _make(ad * bd, (a, b), back, "mul")


def sin(a):
    x = a.data
    return _make(np.sin(x), (a,), lambda g: (g * np.cos(x),), "sin")


def tanh(a):
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def relu(a):
    pos = a.data > 0
    # maximum keeps NaN visible instead of masking it to 0
    return _make(np.maximum(a.data, 0).astype(a.dtype), (a,), lambda g: (g * pos,), "relu")


def leaky_relu(a, slope=0.2):
    pos = a.data > 0
    k = np.where(pos, 1.0, slope).astype(a.dtype)
    return _make(a.data * k, (a,), lambda g: (g * k,), "leaky_relu")


# reductions and shape ---------------------------------------------------


def tsum(a):
    shape = a.shape
    return _make(a.data.sum(), (a,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum")


def mean(a):
    shape, n = a.shape, a.data.size
    return _make(a.data.mean(dtype=a.dtype), (a,), lambda g: (np.broadcast_to(g / n, shape).astype(a.dtype),), "mean")


def reshape(a, shape):
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def concat(tensors, axis=-1):
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), back, "concat")


# dense ------------------------------------------------------------------


def linear(x, W, b=None):
    """``x @ W.T + b`` for x of shape (batch, in) and W of shape (out, in)."""
    xd, Wd = x.data, W.data
    y = xd @ Wd.T
    if b is not None:
        y = y + b.data

    def back(g):
        gx = g @ Wd
        gW = g.T @ xd
        if b is None:
            return gx, gW
        return gx, gW, g.sum(axis=0)

    parents = (x, W) if b is None else (x, W, b)
    return _make(y, parents, back, "linear")


def mse_loss(pred, target):
    """Mean squared difference; ``target`` is treated as a constant."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=pred.dtype)
    diff = pred.data - t
    n = diff.size

    def back(g):
        return (g * (2.0 / n) * diff,)

    return _make(np.mean(diff * diff, dtype=pred.dtype), (pred,), back, "mse")
