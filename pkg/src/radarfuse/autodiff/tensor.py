"""Reverse-mode differentiation over float64 numpy arrays.

A :class:`Tape` records every primitive evaluated while it is active. Each
record keeps the output node, its inputs and a closure mapping the output
adjoint to input adjoints. ``Tape.backward`` replays the record once, in
reverse, and hands back gradients for the requested parameters.

Outside an active tape the same functions just compute values, which is what
inference and finite-difference evaluation use.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class AutodiffError(RuntimeError):
    pass


class ShapeError(AutodiffError, ValueError):
    pass


class DomainError(AutodiffError, ValueError):
    pass


class NonFiniteError(AutodiffError, FloatingPointError):
    pass


_TAPES: list["Tape"] = []


def active_tape() -> "Tape | None":
    return _TAPES[-1] if _TAPES else None


class Tensor:
    """A float64 array that can take part in a recorded computation.

    ``requires_grad`` marks leaves (parameters). Results of recorded ops carry
    ``node`` = their index on the tape that produced them.
    """

    __slots__ = ("data", "requires_grad", "name", "node", "tape", "__weakref__")
    __array_priority__ = 100.0
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64, copy=True) if not isinstance(data, np.ndarray) else data
        if arr.dtype != np.float64:
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self.node: int | None = None
        self.tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # operator sugar; all of these route through the recorded primitives
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported; multiply by a reciprocal")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None):
        return reduce_sum(self, axis)

    def mean(self, axis=None):
        return reduce_mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


class Tape:
    """Ordered record of primitive evaluations; single use."""

    def __init__(self):
        self.entries: list[tuple[str, Tensor, tuple, Callable]] = []
        self.leaves: dict[int, Tensor] = {}
        self._leaf_nodes: dict[int, int] = {}
        self._next = 0
        self.used = False

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPES.pop()
        assert popped is self
        return False

    def _new_node(self) -> int:
        n = self._next
        self._next += 1
        return n

    def node_of(self, t: Tensor) -> int | None:
        if t.tape is self and t.node is not None:
            return t.node
        if t.requires_grad:
            key = id(t)
            if key not in self._leaf_nodes:
                self._leaf_nodes[key] = self._new_node()
                self.leaves[key] = t
            return self._leaf_nodes[key]
        return None

    def record(self, op: str, out: Tensor, inputs: Sequence[Tensor], vjp: Callable) -> None:
        nodes = tuple(self.node_of(t) for t in inputs)
        if all(n is None for n in nodes):
            return
        out.node = self._new_node()
        out.tape = self
        self.entries.append((op, out, nodes, vjp))

    def backward(self, loss: Tensor, params=None):
        """Gradients of the scalar ``loss`` w.r.t. ``params``.

        ``params`` may be a dict name -> Tensor (returns dict of arrays), a
        sequence of Tensors (returns a list), or ``None`` (dict keyed by
        ``id`` of every leaf seen).
        """
        if self.used:
            raise AutodiffError("backward already ran on this tape; record a new forward pass")
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar, got shape {loss.shape}")
        self.used = True
        adj: dict[int, np.ndarray] = {}
        root = self.node_of(loss)
        if root is not None:
            adj[root] = np.ones_like(loss.data)
        for op, out, in_nodes, vjp in reversed(self.entries):
            g = adj.pop(out.node, None)
            if g is None:
                continue
            in_grads = vjp(g)
            for n, gi in zip(in_nodes, in_grads):
                if n is None or gi is None:
                    continue
                if n in adj:
                    adj[n] = adj[n] + gi
                else:
                    adj[n] = gi

        def grad_for(t: Tensor) -> np.ndarray:
            n = self._leaf_nodes.get(id(t))
            g = adj.get(n) if n is not None else None
            if g is None:
                return np.zeros_like(t.data)
            return np.asarray(g, dtype=np.float64).reshape(t.shape)

        if params is None:
            return {k: grad_for(t) for k, t in self.leaves.items()}
        if isinstance(params, dict):
            return {k: grad_for(t) for k, t in params.items()}
        return [grad_for(t) for t in params]


def _finish(op: str, value: np.ndarray, inputs: Sequence[Tensor], vjp: Callable) -> Tensor:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"non-finite value produced by {op}")
    out = Tensor(value)
    tape = active_tape()
    if tape is not None:
        tape.record(op, out, inputs, vjp)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from exc


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return _finish("add", a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return _finish("sub", a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    ad, bd = a.data, b.data
    return _finish(
        "mul",
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _finish("neg", -a.data, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        y = np.exp(a.data)
    return _finish("exp", y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log of a non-positive value")
    x = a.data
    return _finish("log", np.log(x), (a,), lambda g: (g / x,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    return _finish("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0.0
    return _finish("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def absolute(a) -> Tensor:
    a = as_tensor(a)
    s = np.sign(a.data)
    return _finish("abs", np.abs(a.data), (a,), lambda g: (g * s,))


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    x = a.data
    if p != int(p) and np.any(x < 0.0):
        raise DomainError("fractional power of a negative value")
    p = float(p)
    if p == 0.0:
        return _finish("power", np.ones_like(x), (a,), lambda g: (np.zeros_like(x),))
    return _finish("power", x**p, (a,), lambda g: (g * p * x ** (p - 1.0),))


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp into ``[lo, hi]``; gradient passes only where no clamping happened."""
    a = as_tensor(a)
    x = a.data
    inside = (x >= lo) & (x <= hi)
    return _finish("clip", np.clip(x, lo, hi), (a,), lambda g: (g * inside,))


def smooth_l1(a, beta: float = 1.0) -> Tensor:
    a = as_tensor(a)
    x = a.data
    ax = np.abs(x)
    small = ax < beta
    y = np.where(small, 0.5 * x * x / beta, ax - 0.5 * beta)
    return _finish("smooth_l1", y, (a,), lambda g: (g * np.where(small, x / beta, np.sign(x)),))


def atan2(y, x) -> Tensor:
    y, x = as_tensor(y), as_tensor(x)
    _check_broadcast("atan2", y, x)
    yd, xd = y.data, x.data
    r2 = xd * xd + yd * yd
    if np.any(r2 == 0.0):
        raise DomainError("atan2 at the origin")
    return _finish(
        "atan2",
        np.arctan2(yd, xd),
        (y, x),
        lambda g: (_unbroadcast(g * xd / r2, yd.shape), _unbroadcast(-g * yd / r2, xd.shape)),
    )


# ---------------------------------------------------------------------------
# linear algebra and shape


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data
    return _finish("matmul", ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    return _finish("transpose", a.data.T.copy(), (a,), lambda g: (g.T,))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        y = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {old} as {tuple(shape)}") from exc
    return _finish("reshape", y, (a,), lambda g: (g.reshape(old),))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of nothing")
    try:
        y = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]}") from exc
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _finish("concat", y, ts, lambda g: tuple(np.split(g, bounds, axis=axis)))


def gather(a, indices, axis: int = 0) -> Tensor:
    """Select slices along ``axis``; repeated indices accumulate in backward."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    n = a.shape[axis]
    if idx.size and (idx.min() < -n or idx.max() >= n):
        raise ShapeError(f"gather: index out of range for axis of length {n}")
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        moved = np.moveaxis(out, axis, 0)
        np.add.at(moved, idx.reshape(-1), np.moveaxis(g, axis, 0).reshape((-1,) + moved.shape[1:]))
        return (out,)

    return _finish("gather", np.take(a.data, idx, axis=axis), (a,), vjp)


# ---------------------------------------------------------------------------
# reductions


def reduce_sum(a, axis=None) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _finish("reduce_sum", np.asarray(a.data.sum(axis=axis)), (a,), vjp)


def reduce_mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    count = a.data.size if axis is None else shape[axis]
    if count == 0:
        raise ShapeError("mean over an empty axis")

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, shape).copy(),)

    return _finish("reduce_mean", np.asarray(a.data.mean(axis=axis)), (a,), vjp)


def max_over_set(a, axis: int = 1) -> Tensor:
    """Max over the set axis; the gradient goes to the first argmax only."""
    a = as_tensor(a)
    x = a.data
    arg = np.expand_dims(np.argmax(x, axis=axis), axis)
    y = np.take_along_axis(x, arg, axis=axis).squeeze(axis)

    def vjp(g):
        out = np.zeros_like(x)
        np.put_along_axis(out, arg, np.expand_dims(g, axis), axis=axis)
        return (out,)

    return _finish("max_over_set", y, (a,), vjp)


def softmax(a, temperature: float = 1.0) -> Tensor:
    """Row softmax over the last axis of ``a / temperature``."""
    if temperature <= 0:
        raise DomainError("softmax temperature must be positive")
    a = as_tensor(a)
    z = a.data / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return ((y * (g - np.sum(g * y, axis=-1, keepdims=True))) / temperature,)

    return _finish("softmax", y, (a,), vjp)
