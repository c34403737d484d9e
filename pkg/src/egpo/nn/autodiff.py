"""Array-valued reverse-mode automatic differentiation.

A :class:`Tensor` wraps a numpy array and remembers how it was produced.
Calling :meth:`Tensor.backward` on a scalar walks the recorded graph in
reverse topological order and accumulates ``.grad`` on every node that
requires it. The graph is released afterwards; calling ``backward`` a
second time on the same root raises.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class GraphConsumedError(RuntimeError):
    """Raised when backward is called on a graph that was already released."""


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")
    __array_ufunc__ = None  # make numpy defer to the reflected Tensor operators

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = ()):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward: Callable[[np.ndarray], None] | None = None
        self._consumed = False

    # -- bookkeeping -------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        return f"Tensor({self.data!r}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    @staticmethod
    def _make(data: np.ndarray, parents: tuple, backward) -> "Tensor":
        req = any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=req, _parents=parents if req else ())
        if req:
            out._backward = backward
        return out

    def backward(self, grad: np.ndarray | None = None) -> None:
        if self._consumed:
            raise GraphConsumedError("backward() called twice on the same graph")
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without grad requires a scalar output")
            grad = np.ones_like(self.data)
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
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accum(grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        # release the graph; interior grads are dropped, leaf grads kept
        for node in topo:
            if node._parents:
                node._parents = ()
                node._backward = None
                node.grad = None
                node._consumed = True
        self._consumed = True

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other, self.data.dtype)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g, b.shape))

        return Tensor._make(a.data + b.data, (a, b), bw)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        a = self

        def bw(g):
            a._accum(-g)

        return Tensor._make(-a.data, (a,), bw)

    def __sub__(self, other) -> "Tensor":
        return self + (-as_tensor(other, self.data.dtype))

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other, self.data.dtype) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other, self.data.dtype)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g * a.data, b.shape))

        return Tensor._make(a.data * b.data, (a, b), bw)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other, self.data.dtype)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g / b.data, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

        return Tensor._make(a.data / b.data, (a, b), bw)

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other, self.data.dtype) / self

    def __pow__(self, exponent: float) -> "Tensor":
        a = self
        out = a.data ** exponent

        def bw(g):
            a._accum(g * exponent * a.data ** (exponent - 1))

        return Tensor._make(out, (a,), bw)

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other, self.data.dtype)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accum(g @ b.data.T if b.data.ndim == 2 else np.outer(g, b.data))
            if b.requires_grad:
                if a.data.ndim == 1:
                    b._accum(np.outer(a.data, g))
                else:
                    b._accum(a.data.T @ g)

        return Tensor._make(a.data @ b.data, (a, b), bw)

    def __getitem__(self, idx) -> "Tensor":
        a = self

        def bw(g):
            full = np.zeros_like(a.data)
            if _needs_add_at(idx):
                np.add.at(full, idx, g)
            else:
                full[idx] = g
            a._accum(full)

        return Tensor._make(a.data[idx], (a,), bw)

    # -- reductions --------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accum(np.broadcast_to(g, a.shape))

        return Tensor._make(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), bw)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape) -> "Tensor":
        a = self

        def bw(g):
            a._accum(g.reshape(a.shape))

        return Tensor._make(a.data.reshape(*shape), (a,), bw)

    # -- elementwise nonlinearities ----------------------------------------

    def exp(self) -> "Tensor":
        a = self
        out = np.exp(a.data)

        def bw(g):
            a._accum(g * out)

        return Tensor._make(out, (a,), bw)

    def log(self) -> "Tensor":
        a = self

        def bw(g):
            a._accum(g / a.data)

        return Tensor._make(np.log(a.data), (a,), bw)

    def tanh(self) -> "Tensor":
        a = self
        out = np.tanh(a.data)

        def bw(g):
            a._accum(g * (1.0 - out * out))

        return Tensor._make(out, (a,), bw)

    def relu(self) -> "Tensor":
        a = self
        mask = a.data > 0

        def bw(g):
            a._accum(g * mask)

        return Tensor._make(a.data * mask, (a,), bw)

    def softplus(self) -> "Tensor":
        a = self

        def bw(g):
            a._accum(g * _sigmoid(a.data))

        return Tensor._make(np.logaddexp(0.0, a.data), (a,), bw)

    def clip(self, lo: float, hi: float) -> "Tensor":
        """Clamp values; gradient is zero where the clamp is active."""
        a = self
        mask = (a.data >= lo) & (a.data <= hi)

        def bw(g):
            a._accum(g * mask)

        return Tensor._make(np.clip(a.data, lo, hi), (a,), bw)

    def square(self) -> "Tensor":
        return self * self


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _needs_add_at(idx) -> bool:
    if isinstance(idx, tuple):
        return any(isinstance(i, (np.ndarray, list)) for i in idx)
    return isinstance(idx, (np.ndarray, list))


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accum(g[tuple(sl)])

    return Tensor._make(np.concatenate([t.data for t in ts], axis=axis), tuple(ts), bw)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; ties route the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * pick_a, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * ~pick_a, b.shape))

    return Tensor._make(np.where(pick_a, a.data, b.data), (a, b), bw)


def stop_gradient(x: Tensor) -> Tensor:
    return Tensor(x.data)


def leaf_grads(leaves: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Collect gradients of leaf tensors, substituting zeros where untouched."""
    return {
        k: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for k, t in leaves.items()
    }


def numerical_grad(f: Callable[[], float], arrays: Iterable[np.ndarray], h: float = 1e-5):
    """Central finite differences of a scalar function w.r.t. arrays mutated in place."""
    out = []
    for arr in arrays:
        g = np.zeros_like(arr, dtype=np.float64)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = arr[i]
            arr[i] = old + h
            fp = f()
            arr[i] = old - h
            fm = f()
            arr[i] = old
            g[i] = (fp - fm) / (2 * h)
        out.append(g)
    return out
