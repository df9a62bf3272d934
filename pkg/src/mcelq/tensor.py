"""Dense float64 tensors with reverse-mode automatic differentiation.

Covers exactly what small fully connected classifiers need: matrix
products, elementwise arithmetic with broadcasting, relu and tanh,
numerically stable log-sum-exp reductions, and a gather over class
columns. Graphs are built eagerly as ops run; ``backward`` walks the
graph once in reverse topological order and accumulates gradients into
leaf tensors.

Each tensor doubles as its graph node: it stores the op tag, references
to its parents, the cached forward value, and the backward rule as a
closure. Tensors without ``requires_grad`` anywhere upstream carry no
graph at all, so inference costs nothing extra.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericError

Array = np.ndarray


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum gradient entries back down to `shape`, undoing broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A numpy float64 array plus an optional gradient buffer.

    Data is treated as immutable once a tensor participates in a graph;
    the only sanctioned in-place mutation is an optimizer updating leaf
    parameter data between two graph constructions.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data: Array = arr
        self.grad: Array | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[Array], None] | None = None
        self._op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError("item() needs a single-element tensor, got shape %r" % (self.shape,))
        return float(self.data.reshape(()))

    def accumulate_grad(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def __repr__(self) -> str:
        head = np.array2string(self.data, max_line_width=60, threshold=8)
        return f"Tensor(op={self._op!r}, shape={self.shape}, data={head})"

    # operator sugar; every dunder defers to the module-level op
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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(value) -> Tensor:
    """Wrap scalars and arrays as constant tensors; pass tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def from_op(data: Array, parents: tuple[Tensor, ...], op: str,
            backward: Callable[[Array], None]) -> Tensor:
    """Build the result node of an op, pruning the graph when no parent needs grad."""
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(data, dtype=np.float64)
    out.grad = None
    out.name = None
    out._op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.data.shape))

    return from_op(data, (a, b), "add", backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def backward(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g, b.data.shape))

    return from_op(data, (a, b), "sub", backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))

    return from_op(data, (a, b), "mul", backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if np.any(b.data == 0.0):
        raise NumericError("division by zero")
    data = a.data / b.data

    def backward(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return from_op(data, (a, b), "div", backward)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def backward(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(-g)

    return from_op(-a.data, (a,), "neg", backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(
            "matmul needs 2-d operands, got %r and %r" % (a.shape, b.shape))
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            "matmul inner dimensions disagree: %r vs %r" % (a.shape, b.shape))
    data = a.data @ b.data

    def backward(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.T)
        if b.requires_grad:
            b.accumulate_grad(a.data.T @ g)

    return from_op(data, (a, b), "matmul", backward)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise DimensionError("transpose needs a 2-d tensor, got %r" % (a.shape,))
    data = np.ascontiguousarray(a.data.T)

    def backward(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(g.T)

    return from_op(data, (a,), "transpose", backward)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    data = np.reshape(a.data, shape)

    def backward(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(g.reshape(a.data.shape))

    return from_op(data, (a,), "reshape", backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0.0  # derivative at exactly zero is defined as zero
    data = np.where(mask, a.data, 0.0)

    def backward(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * mask)

    return from_op(data, (a,), "relu", backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)

    def backward(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * (1.0 - data * data))

    return from_op(data, (a,), "tanh", backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def backward(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * data)

    return from_op(data, (a,), "exp", backward)


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0.0):
        raise NumericError("log of a non-positive value")
    data = np.log(a.data)

    def backward(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(g / a.data)

    return from_op(data, (a,), "log", backward)


def tsum(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g: Array) -> None:
        if not a.requires_grad:
            return
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        a.accumulate_grad(np.broadcast_to(gg, a.data.shape))

    return from_op(data, (a,), "sum", backward)


def mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size
    if n == 0:
        raise DimensionError("mean of an empty tensor")
    data = a.data.mean()

    def backward(g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(np.broadcast_to(g / n, a.data.shape))

    return from_op(data, (a,), "mean", backward)


def logsumexp(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    """log(sum(exp(a))) along `axis`, stabilized by max subtraction."""
    a = as_tensor(a)
    if a.data.size == 0:
        raise DimensionError("logsumexp of an empty tensor")
    peak = np.max(a.data, axis=axis, keepdims=True)
    ex = np.exp(a.data - peak)
    total = ex.sum(axis=axis, keepdims=True)
    out = peak + np.log(total)
    soft = ex / total
    data = out if keepdims else np.squeeze(out, axis=axis)

    def backward(g: Array) -> None:
        if not a.requires_grad:
            return
        gg = g if keepdims else np.expand_dims(g, axis)
        a.accumulate_grad(gg * soft)

    return from_op(data, (a,), "logsumexp", backward)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    if a.data.size == 0:
        raise DimensionError("softmax of an empty tensor")
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    data = ex / ex.sum(axis=axis, keepdims=True)

    def backward(g: Array) -> None:
        if a.requires_grad:
            inner = (g * data).sum(axis=axis, keepdims=True)
            a.accumulate_grad(data * (g - inner))

    return from_op(data, (a,), "softmax", backward)


def take_targets(a, indices) -> Tensor:
    """Gather a[i, indices[i]] for every row i of a 2-d tensor."""
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise DimensionError("take_targets needs a 2-d tensor, got %r" % (a.shape,))
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    rows, cols = a.data.shape
    if idx.shape[0] != rows:
        raise DimensionError(
            "take_targets got %d indices for %d rows" % (idx.shape[0], rows))
    if idx.size and (idx.min() < 0 or idx.max() >= cols):
        raise ContractError("target index out of range for %d classes" % cols)
    rng = np.arange(rows)
    data = a.data[rng, idx]

    def backward(g: Array) -> None:
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, (rng, idx), g)
            a.accumulate_grad(full)

    return from_op(data, (a,), "take_targets", backward)


def backward(root: Tensor) -> None:
    """Run reverse-mode accumulation from a scalar root.

    Visits each reachable node exactly once. Gradients accumulate into
    existing buffers, so callers must reset grads between passes.
    """
    if root.data.size != 1:
        raise ContractError("backward needs a scalar root, got shape %r" % (root.shape,))
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    root.accumulate_grad(np.ones_like(root.data))
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Compare analytic gradients of a scalar function against central differences.

    `f` must rebuild its graph from the current parameter data on every
    call. Returns the maximum over all coordinates of
    |analytic - numeric| / max(1, |analytic|).
    """
    if not (0.0 < eps <= 1e-2):
        raise ContractError("grad_check eps must lie in (0, 1e-2]")
    zero_grads(params)
    out = f()
    if out.data.size != 1:
        raise ContractError("grad_check needs a scalar-valued function")
    backward(out)
    analytic = [np.array(p.grad) if p.grad is not None else np.zeros_like(p.data)
                for p in params]
    worst = 0.0
    for p, g in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            hi = float(f().data)
            flat[i] = saved - eps
            lo = float(f().data)
            flat[i] = saved
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NumericError("non-finite value in finite-difference probe")
            numeric = (hi - lo) / (2.0 * eps)
            rel = abs(gflat[i] - numeric) / max(1.0, abs(gflat[i]))
            worst = max(worst, rel)
    return worst
