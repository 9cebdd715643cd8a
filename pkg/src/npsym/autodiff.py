"""Minimal reverse-mode automatic differentiation on numpy arrays.

A Tensor wraps a float64 ndarray together with the closure that propagates
gradients to its parents. Forward passes build an implicit tape through the
parent links; ``backward`` on a scalar walks the tape once in reverse
topological order and accumulates ``grad`` arrays on every node that
requires them. Broadcasting follows numpy; gradients of broadcast operands
are summed back to the original shape.

The op set is exactly what the classifiers and their training loss need:
arithmetic, matmul, relu / sigmoid / softplus, log and exp, reductions,
reshape and concatenation. Everything stays float64 throughout.

``no_grad()`` switches tape building off for cheap evaluation passes.
"""

from __future__ import annotations

import contextlib

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    saved = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = saved


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_pull",
                 "_grad_shared")

    def __init__(self, value, requires_grad: bool = False,
                 parents=(), pull=None):
        self.value = np.asarray(value, dtype=float)
        self.requires_grad = requires_grad and _grad_enabled
        self.grad = None
        self._grad_shared = False
        self._parents = parents if self.requires_grad else ()
        self._pull = pull if self.requires_grad else None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, grad={self.requires_grad})"

    # -- graph walk ---------------------------------------------------------

    def backward(self):
        if self.value.size != 1:
            raise ValueError("backward requires a scalar root")
        order = []
        seen = set()
        stack = [(self, False)]
        # iterative DFS: second visit emits the node after its parents
        while stack:
            node, emitted = stack.pop()
            if emitted:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._pull is None:
                continue
            if node.grad is not None:
                node._pull(node.grad)
            # release the closure, parent links and interior gradient so
            # forward temporaries die as the walk retreats; leaves (no pull)
            # keep their gradients for the caller
            node._pull = None
            node._parents = ()
            if node is not self:
                node.grad = None

    def _accumulate(self, grad: np.ndarray):
        # first contribution is stored by reference (it may alias a pull
        # temporary or a read-only broadcast view, hence the flag); a second
        # contribution allocates once, later ones add in place
        if self.grad is None:
            self.grad = grad
            self._grad_shared = True
        elif self._grad_shared:
            self.grad = self.grad + grad
            self._grad_shared = False
        else:
            self.grad += grad

    # -- operators ----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, parents, pull) -> Tensor:
    if _grad_enabled and any(p.requires_grad for p in parents):
        live = tuple(p for p in parents if p.requires_grad)
        return Tensor(value, requires_grad=True, parents=live, pull=pull)
    return Tensor(value)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.value + b.value

    def pull(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.value.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.value.shape))

    return _make(out, (a, b), pull)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.value - b.value

    def pull(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.value.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.value.shape))

    return _make(out, (a, b), pull)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.value * b.value

    def pull(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.value, a.value.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.value, b.value.shape))

    return _make(out, (a, b), pull)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.value @ b.value

    def pull(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.value, -1, -2)
            a._accumulate(_unbroadcast(ga, a.value.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.value, -1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.value.shape))

    return _make(out, (a, b), pull)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0
    out = np.where(mask, a.value, 0.0)

    def pull(g):
        a._accumulate(g * mask)

    return _make(out, (a,), pull)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    # evaluate on the negative half-line only, for stability both ways
    v = a.value
    out = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))),
                   np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))

    def pull(g):
        a._accumulate(g * out * (1.0 - out))

    return _make(out, (a,), pull)


def softplus(a) -> Tensor:
    """log(1 + e^x), computed as max(x, 0) + log1p(e^-|x|)."""
    a = as_tensor(a)
    v = a.value
    out = np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))
    sig = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))),
                   np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))

    def pull(g):
        a._accumulate(g * sig)

    return _make(out, (a,), pull)


def log(a) -> Tensor:
    a = as_tensor(a)
    out = np.log(a.value)

    def pull(g):
        a._accumulate(g / a.value)

    return _make(out, (a,), pull)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.value)

    def pull(g):
        a._accumulate(g * out)

    return _make(out, (a,), pull)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def pull(g):
        g = np.asarray(g)
        if not keepdims and axis is not None:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.value.shape))

    return _make(out, (a,), pull)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.value.mean(axis=axis, keepdims=keepdims)
    count = a.value.size / out.size

    def pull(g):
        g = np.asarray(g)
        if not keepdims and axis is not None:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.value.shape) / count)

    return _make(out, (a,), pull)


def reshape(a, *shape) -> Tensor:
    a = as_tensor(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out = a.value.reshape(shape)
    orig = a.value.shape

    def pull(g):
        a._accumulate(g.reshape(orig))

    return _make(out, (a,), pull)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.value for t in tensors], axis=axis)
    sizes = [t.value.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def pull(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)

    return _make(out, tuple(tensors), pull)
