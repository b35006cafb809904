"""A small reverse-mode differentiation engine over dense 2-D float64 arrays.

Every value lives on a :class:`Tape`. Operations evaluate eagerly and
append a record holding the function that maps the output cotangent to the
input cotangents; :meth:`Tape.backward` replays the records in reverse.

Model parameters stay plain ``numpy`` arrays. :meth:`Tape.param` lifts an
array onto the tape once per tape (memoized by identity) so the gradient of
a parameter can be looked up after the backward pass with
:meth:`Tape.grad_of`.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import EmptyGather, NotScalar, ShapeMismatch

__all__ = [
    "Tape",
    "Tensor",
    "matmul",
    "add",
    "subtract",
    "scale",
    "hadamard",
    "tanh",
    "relu",
    "absolute",
    "row_gather",
    "concat_cols",
    "sum_all",
    "mean_cols",
    "max_cols",
    "broadcast_col",
    "l2_norm",
    "divide_by_scalar",
    "neighborhood_max",
]


class Tensor:
    __slots__ = ("value", "tape", "id", "requires_grad")

    def __init__(self, value: np.ndarray, tape: "Tape", node_id: int, requires_grad: bool):
        self.value = value
        self.tape = tape
        self.id = node_id
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self):
        return f"Tensor(id={self.id}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return subtract(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return hadamard(self, other)
        return scale(self, other)

    __rmul__ = __mul__


class Tape:
    """Append-only record of operations.

    With ``record=False`` values are computed but no backward closures are
    kept; use it for inference.
    """

    def __init__(self, record: bool = True):
        self.record = record
        self._values: list[np.ndarray] = []
        self._records: list[tuple[int, Sequence[Tensor], Callable] | None] = []
        self._params: dict[int, Tensor] = {}
        self._grad_leaves: list[int] = []

    def __len__(self):
        return len(self._values)

    def _push(self, value, requires_grad, leaf=True):
        node_id = len(self._values)
        self._values.append(value)
        self._records.append(None)
        if leaf and requires_grad:
            self._grad_leaves.append(node_id)
        return Tensor(value, self, node_id, requires_grad)

    def leaf(self, value, requires_grad: bool = True) -> Tensor:
        value = np.array(value, dtype=np.float64)
        if value.ndim == 1:
            value = value.reshape(-1, 1)
        if value.ndim != 2:
            raise ShapeMismatch(f"tensors are 2-D, got shape {value.shape}")
        return self._push(value, requires_grad and self.record)

    def constant(self, value) -> Tensor:
        value = np.asarray(value, dtype=np.float64)
        if value.ndim == 1:
            value = value.reshape(-1, 1)
        return self._push(value, False)

    def param(self, array: np.ndarray) -> Tensor:
        """Leaf for a parameter array, shared by every use on this tape."""
        if array.ndim != 2:
            raise ShapeMismatch(f"parameters are 2-D arrays, got shape {array.shape}")
        t = self._params.get(id(array))
        if t is None or t.value is not array:
            # The array itself is the leaf value; it must not be mutated mid-pass.
            t = self._push(array, self.record)
            self._params[id(array)] = t
        return t

    def op(self, value: np.ndarray, inputs: Sequence[Tensor], vjp: Callable) -> Tensor:
        """Register an operation result.

        ``vjp(g)`` receives the output cotangent and returns one cotangent
        (or ``None``) per input.
        """
        for t in inputs:
            if t.tape is not self:
                raise ShapeMismatch("operands belong to different tapes")
        requires = self.record and any(t.requires_grad for t in inputs)
        out = self._push(value, requires, leaf=False)
        if requires:
            self._records[out.id] = (out.id, tuple(inputs), vjp)
        return out

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Gradients of a ``(1, 1)`` loss with respect to every leaf.

        Leaves the loss does not depend on get a zero gradient.
        """
        if loss.shape != (1, 1):
            raise NotScalar(f"loss must have shape (1, 1), got {loss.shape}")
        grads: dict[int, np.ndarray] = {loss.id: np.ones((1, 1))}
        for rec in reversed(self._records[: loss.id + 1]):
            if rec is None:
                continue
            node_id, inputs, vjp = rec
            g = grads.pop(node_id, None)
            if g is None:
                continue
            for t, gi in zip(inputs, vjp(g)):
                if gi is None or not t.requires_grad:
                    continue
                if t.id in grads:
                    grads[t.id] = grads[t.id] + gi
                else:
                    grads[t.id] = gi
        out = {}
        for node_id in self._grad_leaves:
            g = grads.get(node_id)
            out[node_id] = np.zeros_like(self._values[node_id]) if g is None else g
        return out

    def grad_of(self, grads: dict[int, np.ndarray], array: np.ndarray) -> np.ndarray:
        t = self._params.get(id(array))
        if t is None:
            return np.zeros_like(array)
        g = grads.get(t.id)
        if g is None:
            return np.zeros_like(array)
        return g.reshape(array.shape)


def _check(cond, msg):
    if not cond:
        raise ShapeMismatch(msg)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape[1] == b.shape[0], f"matmul {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return a.tape.op(
        av @ bv,
        (a, b),
        lambda g: (g @ bv.T if a.requires_grad else None, av.T @ g if b.requires_grad else None),
    )


def add(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape == b.shape, f"add {a.shape} + {b.shape}")
    return a.tape.op(a.value + b.value, (a, b), lambda g: (g, g))


def subtract(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape == b.shape, f"subtract {a.shape} - {b.shape}")
    return a.tape.op(a.value - b.value, (a, b), lambda g: (g, -g))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return a.tape.op(a.value * c, (a,), lambda g: (g * c,))


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape == b.shape, f"hadamard {a.shape} * {b.shape}")
    av, bv = a.value, b.value
    return a.tape.op(av * bv, (a, b), lambda g: (g * bv, g * av))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.value)
    return a.tape.op(y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return a.tape.op(a.value * mask, (a,), lambda g: (g * mask,))


def absolute(a: Tensor) -> Tensor:
    s = np.sign(a.value)
    return a.tape.op(np.abs(a.value), (a,), lambda g: (g * s,))


def row_gather(a: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size == 0:
        raise EmptyGather("row_gather needs at least one index")
    n = a.shape[0]
    _check(idx.min() >= -n and idx.max() < n, f"row index outside [0, {n})")

    def vjp(g):
        out = np.zeros(a.shape)
        np.add.at(out, idx, g)
        return (out,)

    return a.tape.op(a.value[idx], (a,), vjp)


def concat_cols(*tensors: Tensor) -> Tensor:
    _check(len(tensors) > 0, "concat_cols needs operands")
    rows = tensors[0].shape[0]
    _check(all(t.shape[0] == rows for t in tensors), "concat_cols row counts differ")
    splits = np.cumsum([t.shape[1] for t in tensors])[:-1]
    return tensors[0].tape.op(
        np.concatenate([t.value for t in tensors], axis=1),
        tensors,
        lambda g: tuple(np.split(g, splits, axis=1)),
    )


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return a.tape.op(np.array([[a.value.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),))


def mean_cols(a: Tensor) -> Tensor:
    """Column-wise mean, ``(E, F) -> (1, F)``."""
    n = a.shape[0]
    if n == 0:
        raise EmptyGather("mean over zero rows")
    shape = a.shape
    return a.tape.op(
        a.value.mean(axis=0, keepdims=True),
        (a,),
        lambda g: (np.broadcast_to(g / n, shape).copy(),),
    )


def max_cols(a: Tensor) -> Tensor:
    """Column-wise maximum, ``(E, F) -> (1, F)``; ties route to the lowest row."""
    if a.shape[0] == 0:
        raise EmptyGather("max over zero rows")
    arg = np.argmax(a.value, axis=0)
    cols = np.arange(a.shape[1])
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        out[arg, cols] = g[0]
        return (out,)

    return a.tape.op(a.value[arg, cols][None, :], (a,), vjp)


def broadcast_col(a: Tensor, cols: int) -> Tensor:
    """Repeat an ``(E, 1)`` column ``cols`` times."""
    _check(a.shape[1] == 1, f"broadcast_col expects a column, got {a.shape}")
    return a.tape.op(
        np.repeat(a.value, cols, axis=1),
        (a,),
        lambda g: (g.sum(axis=1, keepdims=True),),
    )


def l2_norm(a: Tensor) -> Tensor:
    """Frobenius norm as a ``(1, 1)`` tensor."""
    n = float(np.sqrt(np.sum(a.value * a.value)))
    av = a.value

    def vjp(g):
        if n == 0.0:
            return (np.zeros_like(av),)
        return (g[0, 0] * av / n,)

    return a.tape.op(np.array([[n]]), (a,), vjp)


def divide_by_scalar(a: Tensor, s: Tensor) -> Tensor:
    """``a / s`` for a ``(1, 1)`` tensor ``s``."""
    _check(s.shape == (1, 1), f"divisor must be (1, 1), got {s.shape}")
    sv = s.value[0, 0]
    out = a.value / sv
    return a.tape.op(out, (a, s), lambda g: (g / sv, np.array([[-np.sum(g * out) / sv]])))


def neighborhood_max(a: Tensor, index: np.ndarray) -> Tensor:
    """Row ``i`` of the output is the entrywise max of rows ``index[i, :]``.

    ``index`` is an ``(E, K)`` integer array; pad short neighbourhoods by
    repeating a member. Gradient goes to the first maximizing position.
    """
    index = np.asarray(index, dtype=np.int64)
    _check(index.ndim == 2 and index.shape[0] > 0, "neighborhood index must be a non-empty (E, K) array")
    stacked = a.value[index]  # (E, K, F)
    pos = np.argmax(stacked, axis=1)  # (E, F)
    src = np.take_along_axis(index, pos, axis=1) if index.shape[1] else pos
    cols = np.broadcast_to(np.arange(a.shape[1]), src.shape)
    value = a.value[src, cols]
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, (src, cols), g)
        return (out,)

    return a.tape.op(value, (a,), vjp)
