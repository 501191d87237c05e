"""Reverse-mode automatic differentiation over numpy arrays.

Small tape-based engine: each op records its parents and a closure that
maps the output gradient to parent gradient contributions. Gradients
accumulate in the deterministic topological order fixed by construction
order. Everything is float64.
"""

from __future__ import annotations

import numpy as np

_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        if _grad_enabled:
            self._parents = _parents
            self._backward = _backward
        else:
            self._parents = ()
            self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    # -- graph construction helpers ------------------------------------

    @staticmethod
    def _coerce(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    def _make(self, data, parents, backward) -> "Tensor":
        if _grad_enabled:
            return Tensor(data, _parents=parents, _backward=backward)
        return Tensor(data)

    # -- arithmetic -----------------------------------------------------

    def __add__(self, other):
        other = self._coerce(other)
        def bwd(g, a=self, b=other):
            return (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape))
        return self._make(self.data + other.data, (self, other), bwd)

    __radd__ = __add__

    def __neg__(self):
        return self._make(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        def bwd(g, a=self, b=other):
            return (_unbroadcast(g * b.data, a.data.shape),
                    _unbroadcast(g * a.data, b.data.shape))
        return self._make(self.data * other.data, (self, other), bwd)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * self._coerce(other).pow(-1.0)

    def __matmul__(self, other):
        other = self._coerce(other)
        def bwd(g, a=self, b=other):
            ga = g @ np.swapaxes(b.data, -1, -2)
            gb = np.swapaxes(a.data, -1, -2) @ g
            return (_unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape))
        return self._make(self.data @ other.data, (self, other), bwd)

    def pow(self, p: float):
        def bwd(g, a=self, p=p):
            return (g * p * np.power(a.data, p - 1.0),)
        return self._make(np.power(self.data, p), (self,), bwd)

    def exp(self):
        out_data = np.exp(self.data)
        return self._make(out_data, (self,), lambda g, o=out_data: (g * o,))

    def log(self):
        return self._make(np.log(self.data), (self,),
                          lambda g, a=self: (g / a.data,))

    def tanh(self):
        out_data = np.tanh(self.data)
        return self._make(out_data, (self,),
                          lambda g, o=out_data: (g * (1.0 - o * o),))

    # -- shape ops --------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        return self._make(self.data.reshape(shape), (self,),
                          lambda g, s=old: (g.reshape(s),))

    def transpose(self, axes):
        inverse = tuple(np.argsort(axes))
        return self._make(self.data.transpose(axes), (self,),
                          lambda g, inv=inverse: (g.transpose(inv),))

    def sum(self, axis=None, keepdims=False):
        old = self.data.shape
        def bwd(g, s=old, axis=axis, keepdims=keepdims):
            if axis is None:
                return (np.broadcast_to(g, s).copy(),)
            if not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, s).copy(),)
        return self._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), bwd)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            n = self.data.size
        else:
            n = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def expand(self, shape):
        """Broadcast to a larger shape; gradient sums back."""
        old = self.data.shape
        return self._make(np.broadcast_to(self.data, shape), (self,),
                          lambda g, s=old: (_unbroadcast(g, s),))

    def take_token(self, index: int):
        """Select one entry along axis 1: (N, T, D) -> (N, D)."""
        def bwd(g, a=self, i=index):
            full = np.zeros_like(a.data)
            full[:, i, :] = g
            return (full,)
        return self._make(self.data[:, index, :], (self,), bwd)

    # -- reductions to python -------------------------------------------

    def item(self) -> float:
        return float(self.data)

    # -- backward pass ----------------------------------------------------

    def backward(self):
        """Populate .grad on every reachable tensor, seeding with ones."""
        if self._backward is None and not self._parents:
            raise RuntimeError(
                "no computation graph recorded for this tensor; "
                "run the forward pass with gradients enabled first")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is None or node.grad is None:
                continue
            for parent, contrib in zip(node._parents, node._backward(node.grad)):
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad = parent.grad + contrib


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    def bwd(g, tensors=tensors, axis=axis, offsets=offsets):
        slicer = [slice(None)] * g.ndim
        grads = []
        for i in range(len(tensors)):
            slicer[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(g[tuple(slicer)])
        return tuple(grads)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    if _grad_enabled:
        return Tensor(data, _parents=tuple(tensors), _backward=bwd)
    return Tensor(data)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    # Shift by a detached max: softmax is invariant, gradient stays exact.
    shifted = x - Tensor(x.data.max(axis=axis, keepdims=True))
    e = shifted.exp()
    return e * e.sum(axis=axis, keepdims=True).pow(-1.0)


def gelu(x: Tensor) -> Tensor:
    # tanh approximation, smooth enough for finite-difference checks.
    c = float(np.sqrt(2.0 / np.pi))
    inner = (x + x.pow(3.0) * 0.044715) * c
    return x * (inner.tanh() + 1.0) * 0.5


def layer_norm(x: Tensor, scale: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    normed = centered * (var + eps).pow(-0.5)
    return normed * scale + shift
