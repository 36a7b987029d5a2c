"""Reverse-mode automatic differentiation over dense numpy tensors.

Everything in this package that needs gradients runs through the small op set
below: a ``Tensor`` wraps a contiguous float array, a ``GradTape`` records ops
while active, and ``GradTape.gradient`` replays the record backwards.  Ops are
plain functions so the forward code reads the same with or without a tape;
when no tape is active they are just thin numpy wrappers.

Production code uses float32 throughout.  The ops preserve the input dtype,
which lets test oracles run the identical computation in float64.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

_TAPE_STACK: list["GradTape"] = []


def _active_tape() -> "GradTape | None":
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tensor:
    """A dense float tensor: contiguous, row-major, immutable by convention."""

    __slots__ = ("data",)

    def __init__(self, data, dtype=np.float32):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(dtype)
        self.data = np.ascontiguousarray(arr)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(data: np.ndarray) -> Tensor:
    t = Tensor.__new__(Tensor)
    t.data = data
    return t


def as_tensor(x, dtype=np.float32) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


class GradTape:
    """Records ops executed while active; replays them in reverse for grads.

    Use as a context manager.  Leaf tensors must be registered with ``watch``
    before (or while) the computation runs; ``gradient`` then returns one
    gradient array per watched tensor, zeros for tensors off the loss path.
    """

    def __init__(self):
        # Each record: (id(out), [(input_tensor, vjp), ...]).  Recording order
        # is a topological order because inputs exist before outputs.
        self._records: list[tuple[int, list]] = []
        self._tracked: set[int] = set()
        self._watched: list[Tensor] = []

    def __enter__(self) -> "GradTape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPE_STACK.pop()
        assert popped is self, "GradTape contexts must nest properly"
        return False

    def watch(self, *tensors: Tensor) -> None:
        for t in tensors:
            if id(t) not in self._tracked:
                self._tracked.add(id(t))
                self._watched.append(t)

    def watches(self, tensor: Tensor) -> bool:
        return id(tensor) in self._tracked

    def _record(self, out: Tensor, pairs: list) -> None:
        self._tracked.add(id(out))
        self._records.append((id(out), pairs))

    def gradient(self, loss: Tensor, sources: Sequence[Tensor] | None = None) -> list[np.ndarray]:
        if loss.size != 1:
            raise ValueError(f"gradient requires a scalar loss, got shape {loss.shape}")
        if id(loss) not in self._tracked:
            raise ValueError("loss was not produced on this tape (nothing recorded)")
        if sources is None:
            sources = self._watched

        grads: dict[int, np.ndarray] = {
            id(loss): np.ones_like(loss.data)
        }
        for out_id, pairs in reversed(self._records):
            g = grads.pop(out_id, None)
            if g is None:
                continue
            for inp, vjp in pairs:
                if id(inp) not in self._tracked:
                    continue
                contrib = vjp(g)
                prev = grads.get(id(inp))
                grads[id(inp)] = contrib if prev is None else prev + contrib
        return [
            grads.get(id(src), np.zeros_like(src.data)) for src in sources
        ]


def _maybe_record(out: Tensor, pairs: list) -> Tensor:
    tape = _active_tape()
    if tape is not None and any(id(inp) in tape._tracked for inp, _ in pairs):
        tape._record(out, pairs)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# forward ops


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    out = _wrap(a.data @ b.data)
    return _maybe_record(out, [
        (a, lambda g, bd=b.data: (g @ bd.T).astype(a.dtype, copy=False)),
        (b, lambda g, ad=a.data: (ad.T @ g).astype(b.dtype, copy=False)),
    ])


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = _wrap(a.data + b.data)
    except ValueError:
        raise ValueError(f"add: shapes do not broadcast: {a.shape} vs {b.shape}")
    return _maybe_record(out, [
        (a, lambda g: _unbroadcast(g, a.shape).astype(a.dtype, copy=False)),
        (b, lambda g: _unbroadcast(g, b.shape).astype(b.dtype, copy=False)),
    ])


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = _wrap(a.data * b.data)
    except ValueError:
        raise ValueError(f"mul: shapes do not broadcast: {a.shape} vs {b.shape}")
    return _maybe_record(out, [
        (a, lambda g, bd=b.data: _unbroadcast(g * bd, a.shape).astype(a.dtype, copy=False)),
        (b, lambda g, ad=a.data: _unbroadcast(g * ad, b.shape).astype(b.dtype, copy=False)),
    ])


def scale(a, c: float) -> Tensor:
    """Multiply by a python scalar (cheaper than a constant tensor)."""
    a = as_tensor(a)
    out = _wrap(a.data * a.dtype.type(c))
    return _maybe_record(out, [(a, lambda g: g * a.dtype.type(c))])


def elu(x) -> Tensor:
    x = as_tensor(x)
    neg = np.expm1(np.minimum(x.data, 0.0))
    out_data = np.where(x.data > 0, x.data, neg.astype(x.dtype, copy=False))
    out = _wrap(out_data.astype(x.dtype, copy=False))

    def vjp(g, xd=x.data, negd=neg):
        return (g * np.where(xd > 0, 1.0, negd + 1.0)).astype(x.dtype, copy=False)

    return _maybe_record(out, [(x, vjp)])


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = _wrap(np.exp(x.data))
    return _maybe_record(out, [(x, lambda g, od=out.data: g * od)])


def log(x) -> Tensor:
    x = as_tensor(x)
    out = _wrap(np.log(x.data))
    return _maybe_record(out, [(x, lambda g, xd=x.data: (g / xd).astype(x.dtype, copy=False))])


def softmax(x) -> Tensor:
    """Softmax over the last axis."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = _wrap((e / e.sum(axis=-1, keepdims=True)).astype(x.dtype, copy=False))

    def vjp(g, y=out.data):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return ((g - dot) * y).astype(x.dtype, copy=False)

    return _maybe_record(out, [(x, vjp)])


def log_softmax(x) -> Tensor:
    """Numerically stable log-softmax over the last axis."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = _wrap((shifted - lse).astype(x.dtype, copy=False))

    def vjp(g, y=out.data):
        return (g - np.exp(y) * g.sum(axis=-1, keepdims=True)).astype(x.dtype, copy=False)

    return _maybe_record(out, [(x, vjp)])


def reduce_sum(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    out = _wrap(np.asarray(x.data.sum(axis=axis)))

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, x.shape).astype(x.dtype, copy=False)
        return np.broadcast_to(np.expand_dims(g, axis), x.shape).astype(x.dtype, copy=False)

    return _maybe_record(out, [(x, vjp)])


def reduce_mean(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    out = _wrap(np.asarray(x.data.mean(axis=axis)))
    denom = x.size if axis is None else x.shape[axis]

    def vjp(g):
        g = g / denom
        if axis is None:
            return np.broadcast_to(g, x.shape).astype(x.dtype, copy=False)
        return np.broadcast_to(np.expand_dims(g, axis), x.shape).astype(x.dtype, copy=False)

    return _maybe_record(out, [(x, vjp)])


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out = _wrap(np.concatenate([t.data for t in ts], axis=axis))
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    pairs = []
    for i, t in enumerate(ts):
        def vjp(g, lo=offsets[i], hi=offsets[i + 1], t=t):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            return np.ascontiguousarray(g[tuple(sl)]).astype(t.dtype, copy=False)

        pairs.append((t, vjp))
    return _maybe_record(out, pairs)


def one_hot(indices, depth: int, dtype=np.float32) -> Tensor:
    """Constant one-hot rows from integer indices; carries no gradient."""
    idx = np.asarray(indices, dtype=np.int64)
    out = np.zeros(idx.shape + (depth,), dtype=dtype)
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return _wrap(out)


def stop_gradient(x) -> Tensor:
    """Identity forward; blocks gradient flow entirely."""
    x = as_tensor(x)
    return _wrap(x.data)


def scale_gradient(x, factor: float) -> Tensor:
    """Identity forward; multiplies the incoming gradient by ``factor``."""
    if not 0.0 <= factor <= 1.0:
        raise ValueError(f"scale_gradient factor must be in [0, 1], got {factor}")
    x = as_tensor(x)
    out = _wrap(x.data)
    return _maybe_record(out, [(x, lambda g: (g * x.dtype.type(factor)))])
