"""Dense float64 matrices with reverse-mode differentiation on an explicit tape.

Every value in the model is a strictly two-dimensional :class:`Tensor`
(scalars are 1x1).  Operations executed while a :class:`Tape` is active are
recorded as an ordered list of nodes; :func:`backward` replays that list in
reverse to accumulate gradients into every participating tensor that has
``requires_grad`` set, then clears the record.  A tape lives for one training
step and is rebuilt on the next, so the recorded graph always matches the
computation that actually ran.

Tapes are thread-local: concurrent sessions on different threads do not see
each other's records.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

LOG_FLOOR = 1e-12  # clamp applied inside logarithms, and nowhere else

_BackwardRule = Callable[[np.ndarray, Sequence[bool]], tuple]


class Tensor:
    """A dense float64 matrix, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError(f"tensors are 2-D; got {arr.ndim}-D data")
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a 1x1 tensor, got shape {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; every branch routes through a recorded op below.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Node:
    """One executed operation: inputs, output, and how to push gradients back."""

    __slots__ = ("inputs", "output", "rule")

    def __init__(self, inputs: tuple[Tensor, ...], output: Tensor, rule: _BackwardRule):
        self.inputs = inputs
        self.output = output
        self.rule = rule


_ACTIVE = threading.local()


def _tape_stack() -> list:
    stack = getattr(_ACTIVE, "stack", None)
    if stack is None:
        stack = []
        _ACTIVE.stack = stack
    return stack


def _current_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of operations, owned by a single training step.

    Inputs of every node precede it in the list by construction, so one
    reverse sweep visits each node exactly once.
    """

    def __init__(self):
        self._nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise RuntimeError("tape stack corrupted: exiting a tape that is not active")
        stack.pop()

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, node: Node) -> None:
        self._nodes.append(node)

    def backward(self, loss: Tensor) -> None:
        """Accumulate dLoss/dT into ``.grad`` of every tracked tensor, then clear.

        Tensors that were recorded but do not influence the loss end up with an
        exact zero gradient.
        """
        if loss.shape != (1, 1):
            raise ValueError(f"backward() needs a 1x1 scalar loss, got shape {loss.shape}")
        for node in self._nodes:
            if node.output.requires_grad:
                node.output.grad = np.zeros_like(node.output.data)
            for t in node.inputs:
                if t.requires_grad:
                    t.grad = np.zeros_like(t.data)
        if loss.requires_grad and loss.grad is None:
            loss.grad = np.zeros_like(loss.data)
        if loss.grad is not None:
            loss.grad[...] = 1.0
        for node in reversed(self._nodes):
            g = node.output.grad
            if g is None or not g.any():
                continue
            need = tuple(t.requires_grad for t in node.inputs)
            for t, dg in zip(node.inputs, node.rule(g, need)):
                if dg is not None:
                    t.grad += dg
        self._nodes.clear()


def backward(loss: Tensor) -> None:
    """Run reverse accumulation from ``loss`` on the active tape."""
    tape = _current_tape()
    if tape is None:
        raise RuntimeError("backward() requires an active Tape context")
    tape.backward(loss)


def _apply(out_data: np.ndarray, inputs: tuple[Tensor, ...], rule: _BackwardRule) -> Tensor:
    tape = _current_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=track)
    if track:
        tape._record(Node(inputs, out, rule))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Sum a gradient back down to the shape of a broadcast operand."""
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] > 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] > 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    for ax in (0, 1):
        da, db = a.shape[ax], b.shape[ax]
        if da != db and da != 1 and db != 1:
            raise ValueError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    ash, bsh = a.shape, b.shape

    def rule(g, need):
        return (
            _unbroadcast(g, ash) if need[0] else None,
            _unbroadcast(g, bsh) if need[1] else None,
        )

    return _apply(a.data + b.data, (a, b), rule)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    ash, bsh = a.shape, b.shape

    def rule(g, need):
        return (
            _unbroadcast(g, ash) if need[0] else None,
            _unbroadcast(-g, bsh) if need[1] else None,
        )

    return _apply(a.data - b.data, (a, b), rule)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product with numpy-style broadcasting."""
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data

    def rule(g, need):
        return (
            _unbroadcast(g * bd, ad.shape) if need[0] else None,
            _unbroadcast(g * ad, bd.shape) if need[1] else None,
        )

    return _apply(ad * bd, (a, b), rule)


def neg(a: Tensor) -> Tensor:
    def rule(g, need):
        return ((-g) if need[0] else None,)

    return _apply(-a.data, (a,), rule)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; backward is dA = G Bᵀ, dB = Aᵀ G."""
    if a.cols != b.rows:
        raise ValueError(f"matmul: inner dimensions disagree ({a.shape} @ {b.shape})")
    ad, bd = a.data, b.data

    def rule(g, need):
        return (
            g @ bd.T if need[0] else None,
            ad.T @ g if need[1] else None,
        )

    return _apply(ad @ bd, (a, b), rule)


def transpose(a: Tensor) -> Tensor:
    def rule(g, need):
        return (g.T if need[0] else None,)

    return _apply(a.data.T, (a,), rule)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def rule(g, need):
        return ((g * mask) if need[0] else None,)

    return _apply(np.where(mask, a.data, 0.0), (a,), rule)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)), computed without overflow."""
    xd = a.data

    def rule(g, need):
        return ((g * _sigmoid(xd)) if need[0] else None,)

    return _apply(np.logaddexp(0.0, xd), (a,), rule)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax, stabilized by subtracting each row's maximum."""
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def rule(g, need):
        if not need[0]:
            return (None,)
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return _apply(y, (a,), rule)


def safe_log(a: Tensor, floor: float = LOG_FLOOR) -> Tensor:
    """log(max(x, floor)); the gradient is zero wherever the clamp engaged."""
    xd = a.data
    clamped = np.maximum(xd, floor)

    def rule(g, need):
        if not need[0]:
            return (None,)
        return (np.where(xd >= floor, g / clamped, 0.0),)

    return _apply(np.log(clamped), (a,), rule)


def reciprocal(a: Tensor) -> Tensor:
    """1/x elementwise; caller guarantees x is bounded away from zero."""
    y = 1.0 / a.data

    def rule(g, need):
        return ((-g * y * y) if need[0] else None,)

    return _apply(y, (a,), rule)


def row_normalize(a: Tensor) -> Tensor:
    """Divide each row by its sum; rows must have nonzero sums."""
    r = a.data.sum(axis=1, keepdims=True)
    y = a.data / r

    def rule(g, need):
        if not need[0]:
            return (None,)
        return ((g - (g * y).sum(axis=1, keepdims=True)) / r,)

    return _apply(y, (a,), rule)


def pairwise_sqdist(a: Tensor, b: Tensor) -> Tensor:
    """All squared Euclidean distances between rows of a (n×d) and b (m×d)."""
    if a.cols != b.cols:
        raise ValueError(f"pairwise_sqdist: widths disagree ({a.shape} vs {b.shape})")
    ad, bd = a.data, b.data
    sq_a = (ad * ad).sum(axis=1, keepdims=True)
    sq_b = (bd * bd).sum(axis=1, keepdims=True).T
    d = sq_a + sq_b - 2.0 * (ad @ bd.T)

    def rule(g, need):
        da = 2.0 * (g.sum(axis=1, keepdims=True) * ad - g @ bd) if need[0] else None
        db = 2.0 * (g.sum(axis=0)[:, None] * bd - g.T @ ad) if need[1] else None
        return (da, db)

    return _apply(d, (a, b), rule)


def rowsum(a: Tensor) -> Tensor:
    shape = a.shape

    def rule(g, need):
        return (np.broadcast_to(g, shape) if need[0] else None,)

    return _apply(a.data.sum(axis=1, keepdims=True), (a,), rule)


def colsum(a: Tensor) -> Tensor:
    shape = a.shape

    def rule(g, need):
        return (np.broadcast_to(g, shape) if need[0] else None,)

    return _apply(a.data.sum(axis=0, keepdims=True), (a,), rule)


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape

    def rule(g, need):
        return (np.broadcast_to(g, shape) if need[0] else None,)

    return _apply(a.data.sum().reshape(1, 1), (a,), rule)
