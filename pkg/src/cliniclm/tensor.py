"""Dense tensors with reverse-mode automatic differentiation.

numpy owns the buffers; every differentiable operation records a backward
closure so ``backward`` can push gradients from a scalar loss down to any
participating leaf. fp32 is the working precision; fp64 exists for
finite-difference verification. A NaN or Inf produced by any operation is
treated as a corrupted state and raises immediately (toggle with
``finite_checks`` for profiling only).
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

DTYPES = {"fp32": np.float32, "fp64": np.float64}

# Checked after every op; NaN/Inf is an error state, not a value.
finite_checks = True

_GELU_K = math.sqrt(2.0 / math.pi)
_GELU_C = 0.044715


class NumericsError(ValueError):
    """Invalid graph use, shape mismatch, or non-finite values."""


def _np_dtype(dtype) -> np.dtype:
    if isinstance(dtype, str):
        try:
            return np.dtype(DTYPES[dtype])
        except KeyError:
            raise NumericsError(f"unsupported dtype {dtype!r}; use 'fp32' or 'fp64'")
    return np.dtype(dtype)


def _check_finite(arr: np.ndarray, what: str) -> None:
    if finite_checks and not np.isfinite(arr).all():
        raise NumericsError(f"non-finite values produced by {what}")


class Tensor:
    """A dense row-major array plus optional gradient bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(_np_dtype(dtype), copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        _check_finite(arr, "tensor construction")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> str:
        return "fp64" if self.data.dtype == np.float64 else "fp32"

    def item(self) -> float:
        return float(self.data)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(_np_dtype(dtype)), requires_grad=self.requires_grad)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # -- operator sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other, self))

    def __radd__(self, other):
        return add(_wrap(other, self), self)

    def __sub__(self, other):
        return sub(self, _wrap(other, self))

    def __rsub__(self, other):
        return sub(_wrap(other, self), self)

    def __mul__(self, other):
        return mul(self, _wrap(other, self))

    def __rmul__(self, other):
        return mul(_wrap(other, self), self)

    def __truediv__(self, other):
        return div(self, _wrap(other, self))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return pow_(self, p)

    def backward(self) -> None:
        backward(self)

    def reshape(self, *shape) -> "Tensor":
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, axes: Sequence[int]) -> "Tensor":
        return transpose(self, axes)


def _wrap(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn, what: str) -> Tensor:
    _check_finite(data, what)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    needs = any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _same_dtype(a: Tensor, b: Tensor, what: str) -> None:
    if a.data.dtype != b.data.dtype:
        raise NumericsError(f"{what}: dtype mismatch {a.dtype} vs {b.dtype}")


# -- elementwise -------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype(a, b, "add")
    data = a.data + b.data

    def bwd(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make(data, (a, b), bwd, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype(a, b, "sub")
    data = a.data - b.data

    def bwd(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _make(data, (a, b), bwd, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype(a, b, "mul")
    data = a.data * b.data

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), bwd, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype(a, b, "div")
    data = a.data / b.data

    def bwd(g):
        _accum(a, _unbroadcast(g / b.data, a.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(data, (a, b), bwd, "div")


def neg(a: Tensor) -> Tensor:
    def bwd(g):
        _accum(a, -g)

    return _make(-a.data, (a,), bwd, "neg")


def pow_(a: Tensor, p: float) -> Tensor:
    p = float(p)
    data = a.data**p

    def bwd(g):
        _accum(a, g * p * a.data ** (p - 1.0))

    return _make(data, (a,), bwd, "pow")


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def bwd(g):
        _accum(a, g * data)

    return _make(data, (a,), bwd, "exp")


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def bwd(g):
        _accum(a, g / a.data)

    return _make(data, (a,), bwd, "log")


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def bwd(g):
        _accum(a, g * (1.0 - data * data))

    return _make(data, (a,), bwd, "tanh")


def sigmoid(a: Tensor) -> Tensor:
    data = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        _accum(a, g * data * (1.0 - data))

    return _make(data, (a,), bwd, "sigmoid")


def gelu(a: Tensor) -> Tensor:
    """Gaussian error linear unit, tanh approximation."""
    x = a.data
    x2 = x * x
    inner = _GELU_K * (x + _GELU_C * x2 * x)
    t = np.tanh(inner)
    data = 0.5 * x * (1.0 + t)

    def bwd(g):
        dinner = _GELU_K * (1.0 + 3.0 * _GELU_C * x2)
        local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
        _accum(a, g * local)

    return _make(data, (a,), bwd, "gelu")


# -- reductions --------------------------------------------------------


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.shape).copy())
            return
        gg = g
        if not keepdims:
            gg = np.expand_dims(gg, axis)
        _accum(a, np.broadcast_to(gg, a.shape).copy())

    return _make(np.asarray(data), (a,), bwd, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.size
    else:
        n = a.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), Tensor(np.asarray(1.0 / n, dtype=a.data.dtype)))


# -- shape manipulation ------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape

    def bwd(g):
        _accum(a, g.reshape(old))

    return _make(a.data.reshape(shape), (a,), bwd, "reshape")


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def bwd(g):
        _accum(a, g.transpose(inv))

    return _make(a.data.transpose(axes), (a,), bwd, "transpose")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, s, e in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(s, e)
            _accum(t, g[tuple(idx)])

    return _make(data, tensors, bwd, "concat")


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def bwd(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        _accum(a, full)

    return _make(a.data[idx].copy(), (a,), bwd, "slice")


# -- linear algebra ----------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype(a, b, "matmul")
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise NumericsError("matmul requires tensors with at least 2 dimensions")
    data = a.data @ b.data

    def bwd(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        _accum(a, _unbroadcast(ga, a.shape))
        _accum(b, _unbroadcast(gb, b.shape))

    return _make(data, (a, b), bwd, "matmul")


# -- neural-net primitives ---------------------------------------------


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        _accum(a, data * (g - inner))

    return _make(data, (a,), bwd, "softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    data = xhat * gamma.data + beta.data

    def bwd(g):
        if gamma.requires_grad:
            red = tuple(range(g.ndim - 1))
            _accum(gamma, (g * xhat).sum(axis=red))
        if beta.requires_grad:
            red = tuple(range(g.ndim - 1))
            _accum(beta, g.sum(axis=red))
        if x.requires_grad:
            gx = g * gamma.data
            m1 = gx.mean(axis=-1, keepdims=True)
            m2 = (gx * xhat).mean(axis=-1, keepdims=True)
            _accum(x, inv * (gx - m1 - xhat * m2))

    return _make(data, (x, gamma, beta), bwd, "layer_norm")


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup: output shape ids.shape + (width,)."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise NumericsError("embedding id out of range")
    data = table.data[ids]
    width = table.shape[1]

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.ravel(), g.reshape(-1, width))
        _accum(table, gt)

    return _make(data, (table,), bwd, "embedding")


def gather_rows(x: Tensor, rows: np.ndarray) -> Tensor:
    """Select rows of a 2-D tensor by index."""
    rows = np.asarray(rows)
    if x.data.ndim != 2:
        raise NumericsError("gather_rows expects a 2-D tensor")
    data = x.data[rows].copy()

    def bwd(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, rows, g)
        _accum(x, gx)

    return _make(data, (x,), bwd, "gather_rows")


def masked_fill(a: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Where mask is True replace with `value`; gradient flows elsewhere."""
    mask = np.asarray(mask, dtype=bool)
    data = np.where(mask, np.asarray(value, dtype=a.data.dtype), a.data)

    def bwd(g):
        _accum(a, np.where(mask, 0.0, g).astype(a.data.dtype))

    return _make(data, (a,), bwd, "masked_fill")


def cross_entropy_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer targets under row softmax.

    `logits` is (N, V); `targets` is (N,) class indices.
    """
    targets = np.asarray(targets)
    if logits.data.ndim != 2:
        raise NumericsError("cross_entropy_logits expects (N, V) logits")
    n, v = logits.shape
    if targets.shape != (n,):
        raise NumericsError("targets must be (N,) matching logits rows")
    if targets.size and (targets.min() < 0 or targets.max() >= v):
        raise NumericsError("target id out of range")
    z = logits.data
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    sumexp = e.sum(axis=1, keepdims=True)
    logprobs = (z - m) - np.log(sumexp)
    nll = -logprobs[np.arange(n), targets]
    data = np.asarray(nll.mean(), dtype=z.dtype)

    def bwd(g):
        p = e / sumexp
        p[np.arange(n), targets] -= 1.0
        _accum(logits, p * (g / n))

    return _make(data, (logits,), bwd, "cross_entropy_logits")


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; pass p=0 or use eval paths to disable."""
    if p <= 0.0:
        return x
    u = rng.random(x.shape, dtype=np.float32)
    keep = (u >= p).astype(x.data.dtype) / (1.0 - p)
    return mul(x, Tensor(keep))


# -- backward pass -----------------------------------------------------


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into .grad for every tensor in root's graph.

    The root must be scalar. Leaves that do not participate in the graph are
    untouched (their .grad stays None, which reads as zero). Intermediates
    are held alive by parent references, so the graph cannot dangle.
    """
    if root.data.size != 1:
        raise NumericsError("backward requires a scalar root")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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

    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
