"""Reverse-mode differentiable tensor backed by numpy arrays."""

from __future__ import annotations

import contextlib

import numpy as np

from ..errors import GraphError, NumericError

_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the dtype used for newly created tensors.

    ``precision(np.float64)`` is the gradient-check mode; training and
    decoding run at the float32 default.
    """
    global _DEFAULT_DTYPE
    previous = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = previous


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording a graph."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def grad_enabled():
    return _GRAD_ENABLED


class Tensor:
    """An n-d array with an optional gradient and a link to the op that made it.

    Leaves created by the user keep ``grad`` across backward passes (it
    accumulates until :meth:`zero_grad`). Intermediate nodes drop their
    graph links once backward has run, so a second :meth:`backward` on the
    same result raises :class:`GraphError`.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed", "name")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._consumed = False
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return not self._parents

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def _accumulate(self, g):
        g = np.asarray(g, dtype=self.data.dtype)
        if g.shape != self.data.shape:
            raise GraphError(f"gradient shape {g.shape} does not match tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def backward(self, grad=None):
        if self._consumed:
            raise GraphError("graph already consumed by a previous backward pass; run forward again")
        if not self.requires_grad:
            raise GraphError("tensor does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise GraphError("backward on a non-scalar tensor needs an explicit gradient")
            grad = np.ones_like(self.data)
        if not np.all(np.isfinite(grad)):
            raise NumericError("non-finite seed gradient")

        order = topological_order(self)
        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in order:
            if node._parents:
                node._parents = ()
                node._backward = None
                node.grad = None
        self._consumed = True

    # operator sugar
    def __add__(self, other):
        from .ops import add
        return add(self, other)

    def __sub__(self, other):
        from .ops import sub
        return sub(self, other)

    def __mul__(self, other):
        from .ops import mul
        return mul(self, other)

    def __matmul__(self, other):
        from .ops import matmul
        return matmul(self, other)


def topological_order(root):
    """Nodes reachable from ``root`` ordered so every node follows its inputs."""
    order = []
    seen = set()
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


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(data, parents, backward):
    """Wrap an op output, linking it into the graph when gradients are needed."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._consumed = False
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out
