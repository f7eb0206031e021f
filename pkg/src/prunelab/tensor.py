"""Dense tensors with tape-based reverse-mode differentiation.

Values are float32 by default. Any op that sees a float64 operand computes in
float64, which is how the finite-difference oracle evaluates the same graph
at higher precision. Adjoints are accumulated in float64 inside
:func:`backward` and cast back to each leaf's dtype at the end.

Only one implicit broadcast exists: :func:`add_bias` adds a per-feature (or
per-channel) vector. Every other binary op requires equal shapes.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import DimensionMismatch, LabelOutOfRange, NonFinite, NotScalar

GradientMap = dict  # parameter id -> ndarray, same shape as the parameter

_FLOAT_TYPES = (np.float32, np.float64)


class Tensor:
    """An n-dimensional float array that can participate in a recorded graph.

    Tensors are treated as immutable once created; ops always return new ones.
    A leaf tensor with ``requires_grad=True`` and a ``name`` shows up in the
    :data:`GradientMap` returned by :func:`backward` under that name.
    """

    __slots__ = ("data", "name", "requires_grad")

    def __init__(self, data, name: Optional[str] = None, requires_grad: bool = False, dtype=np.float32):
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.name = name
        self.requires_grad = requires_grad

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool = False) -> "Tensor":
        t = cls.__new__(cls)
        if arr.dtype.type not in _FLOAT_TYPES:
            arr = arr.astype(np.float32)
        t.data = arr
        t.name = None
        t.requires_grad = requires_grad
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise NotScalar(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    def __add__(self, other):
        return add(self, _as_tensor(other, self))

    def __radd__(self, other):
        return add(_as_tensor(other, self), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor._wrap(np.full(like.shape, value, dtype=like.dtype))


# ---------------------------------------------------------------------------
# Tape

@dataclass
class _Entry:
    op: str
    inputs: tuple
    output: Tensor
    vjp: Callable


_local = threading.local()


def active_tape() -> Optional["Tape"]:
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class Tape:
    """Records primitive ops executed while it is the active tape.

    Use as a context manager; tapes are per-thread and may nest (the
    innermost one records).
    """

    def __init__(self):
        self.entries: list[_Entry] = []

    def __enter__(self) -> "Tape":
        if not hasattr(_local, "stack"):
            _local.stack = []
        _local.stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.stack.pop()
        return False

    def __len__(self):
        return len(self.entries)

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, vjp: Callable) -> None:
        self.entries.append(_Entry(op, tuple(inputs), output, vjp))


def _emit(op: str, out: np.ndarray, inputs: Sequence[Tensor], vjp: Callable) -> Tensor:
    requires = any(t.requires_grad for t in inputs)
    result = Tensor._wrap(out, requires_grad=requires)
    tape = active_tape()
    if requires and tape is not None:
        tape.record(op, inputs, result, vjp)
    return result


def backward(tape: Tape, loss: Tensor) -> GradientMap:
    """Reverse-mode adjoints of the scalar ``loss`` for every named leaf.

    Keys are the names of leaves with ``requires_grad`` that the tape saw as
    inputs; leaves unreachable from ``loss`` get zero gradients.
    """
    if loss.data.size != 1:
        raise NotScalar(f"loss must have exactly one element, got shape {loss.shape}")
    produced = {id(e.output) for e in tape.entries}
    leaves: dict[int, Tensor] = {}
    for e in tape.entries:
        for t in e.inputs:
            if t.requires_grad and id(t) not in produced:
                leaves.setdefault(id(t), t)
    if loss.requires_grad and id(loss) not in produced:
        leaves.setdefault(id(loss), loss)

    adj: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape, dtype=np.float64)}
    for e in reversed(tape.entries):
        g = adj.pop(id(e.output), None)
        if g is None:
            continue
        local = e.vjp(g.astype(e.output.dtype, copy=False))
        for t, gi in zip(e.inputs, local):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in adj:
                adj[key] += gi
            else:
                adj[key] = np.array(gi, dtype=np.float64)

    grads: GradientMap = {}
    for n, (key, t) in enumerate(leaves.items()):
        name = t.name if t.name is not None else f"_leaf{n}"
        g = adj.get(key)
        grads[name] = np.zeros(t.shape, t.dtype) if g is None else g.astype(t.dtype)
    return grads


# ---------------------------------------------------------------------------
# primitive ops

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionMismatch(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    A, B = a.data, b.data

    def vjp(g):
        return (g @ B.T if a.requires_grad else None, A.T @ g if b.requires_grad else None)

    return _emit("matmul", A @ B, (a, b), vjp)


def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise DimensionMismatch(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _emit("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _emit("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    A, B = a.data, b.data
    return _emit("mul", A * B, (a, b), lambda g: (g * B, g * A))


def scale(a: Tensor, c: float) -> Tensor:
    c = a.dtype.type(c)
    return _emit("scale", a.data * c, (a,), lambda g: (g * c,))


def square(a: Tensor) -> Tensor:
    A = a.data
    return _emit("square", A * A, (a,), lambda g: (2 * A * g,))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add ``b`` along axis 1: per output feature (N, F) or per channel (N, F, H, W)."""
    if b.data.ndim != 1 or x.data.ndim < 2 or x.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"bias of shape {b.shape} does not match input {x.shape}")
    bshape = (1, -1) + (1,) * (x.data.ndim - 2)
    axes = (0,) + tuple(range(2, x.data.ndim))
    return _emit("add_bias", x.data + b.data.reshape(bshape), (x, b),
                 lambda g: (g, g.sum(axis=axes)))


def relu(x: Tensor) -> Tensor:
    # subgradient at exactly 0 is taken as 0
    active = x.data > 0
    return _emit("relu", np.where(active, x.data, 0).astype(x.dtype), (x,),
                 lambda g: (g * active,))


def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    return _emit("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.shape[0], -1))


def tsum(x: Tensor) -> Tensor:
    src = x.shape
    out = np.asarray(x.data.sum(dtype=np.float64), dtype=x.dtype)
    return _emit("sum", out, (x,), lambda g: (np.full(src, g.reshape(()), dtype=g.dtype),))


def conv2d(x: Tensor, kernels_: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d cross-correlation of (N, C, H, W) input with (F, C, kh, kw) kernels."""
    if x.data.ndim != 4 or kernels_.data.ndim != 4:
        raise DimensionMismatch(f"conv2d needs 4-d input and kernels, got {x.shape}, {kernels_.shape}")
    if stride < 1 or padding < 0:
        raise DimensionMismatch(f"invalid stride {stride} / padding {padding}")
    n, c, h, w = x.shape
    f, kc, kh, kw = kernels_.shape
    if kc != c:
        raise DimensionMismatch(f"input has {c} channels, kernels expect {kc}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise DimensionMismatch(f"kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    X = x.data
    W = kernels_.data
    if X.dtype != W.dtype:
        dt = np.result_type(X, W)
        X, W = X.astype(dt), W.astype(dt)
    cols = kernels.im2col(X, kh, kw, stride, padding)
    W2 = W.reshape(f, -1)
    out = np.matmul(W2, cols).reshape(n, f, oh, ow)

    def vjp(g):
        g = g.reshape(n, f, oh * ow)
        dw = np.tensordot(g, cols, axes=([0, 2], [0, 2])).reshape(W.shape) if kernels_.requires_grad else None
        dx = None
        if x.requires_grad:
            dx = kernels.col2im(np.matmul(W2.T, g), X.shape, kh, kw, stride, padding)
        return dx, dw

    return _emit("conv2d", out, (x, kernels_), vjp)


def maxpool2d(x: Tensor, size: int, stride: Optional[int] = None) -> Tensor:
    stride = size if stride is None else stride
    if x.data.ndim != 4:
        raise DimensionMismatch(f"maxpool2d needs 4-d input, got {x.shape}")
    if size < 1 or stride < 1 or size > x.shape[2] or size > x.shape[3]:
        raise DimensionMismatch(f"pool window {size} does not fit input {x.shape}")
    out, argmax = kernels.maxpool_forward(x.data, size, stride)
    src = x.shape
    return _emit("maxpool2d", out, (x,),
                 lambda g: (kernels.maxpool_backward(g, argmax, src),))


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy of (N, K) logits against integer labels."""
    labels = np.asarray(labels)
    if logits.data.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionMismatch(f"logits {logits.shape} vs labels {labels.shape}")
    n, k = logits.shape
    if n == 0:
        raise DimensionMismatch("empty batch")
    if labels.min() < 0 or labels.max() >= k:
        raise LabelOutOfRange(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    z = logits.data.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = np.asarray((lse - z[rows, labels]).mean(), dtype=logits.dtype)

    def vjp(g):
        p = np.exp(z - lse[:, None])
        p[rows, labels] -= 1.0
        return ((p * (float(g) / n)).astype(logits.dtype),)

    return _emit("softmax_cross_entropy", loss, (logits,), vjp)


# ---------------------------------------------------------------------------
# finite differences

def _scalar_value(v) -> float:
    if isinstance(v, Tensor):
        if v.size != 1:
            raise NotScalar(f"function returned shape {v.shape}")
        return float(v.data.reshape(()))
    return float(v)


def finite_diff_gradient(f: Callable, at, eps: float = 1e-3) -> Tensor:
    """Central-difference gradient of scalar ``f`` at ``at``, in float64.

    ``f`` receives a float64 :class:`Tensor` and returns a scalar (Tensor or
    float). Raises :class:`NonFinite` if any probe is NaN or infinite.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    base = at.data if isinstance(at, Tensor) else at
    x = np.array(base, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + eps
        fp = _scalar_value(f(Tensor._wrap(x.copy())))
        flat[j] = orig - eps
        fm = _scalar_value(f(Tensor._wrap(x.copy())))
        flat[j] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFinite(f"non-finite probe at element {j}")
        out[j] = (fp - fm) / (2.0 * eps)
    return Tensor._wrap(grad)


def max_relative_error(actual, expected, floor: float = 1e-12) -> float:
    """``max|a - e| / max|e|``, the norm-wise relative error used by gradient checks."""
    a = np.asarray(actual.data if isinstance(actual, Tensor) else actual, dtype=np.float64)
    e = np.asarray(expected.data if isinstance(expected, Tensor) else expected, dtype=np.float64)
    return float(np.max(np.abs(a - e), initial=0.0) / max(np.max(np.abs(e), initial=0.0), floor))
