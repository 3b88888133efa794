"""Dense tensors plus an explicit operation tape for reverse-mode gradients.

A Tensor wraps a numpy array and a requires_grad marker. Differentiable
primitives (see ops.py) append OpRecords to the innermost active Tape as they
execute; backward() then replays the records once each, in reverse execution
order, accumulating gradients into a map keyed by the tensors themselves.

Tensors are treated as immutable once created. The optimizer replaces a
parameter's .data wholesale instead of mutating it, so tensors without
requires_grad are safe to share across threads, and independent tapes may run
concurrently (each thread sees its own tape stack).
"""

from __future__ import annotations

import threading

import numpy as np

from ..errors import ContractError

DEFAULT_DTYPE = np.float64


class Tensor:
    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = np.ascontiguousarray(arr, dtype=dtype)
        elif arr.dtype != np.float64 and arr.dtype != np.float32:
            arr = np.ascontiguousarray(arr, dtype=DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


class OpRecord:
    """One executed primitive: its output tensors and a gradient closure.

    backprop(grad_outputs, grads) receives one gradient array (or None) per
    output and accumulates input gradients into the ``grads`` map.
    """

    __slots__ = ("outputs", "backprop")

    def __init__(self, outputs, backprop):
        self.outputs = outputs
        self.backprop = backprop


class Tape:
    """Execution-ordered record of differentiable operations."""

    __slots__ = ("_records",)

    def __init__(self):
        self._records = []

    def __len__(self):
        return len(self._records)

    @property
    def records(self):
        return self._records

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _stack().pop()
        assert popped is self, "tape stack corrupted"
        return False


_tls = threading.local()


def _stack() -> list:
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = _tls.stack = []
    return stack


def active_tape() -> Tape | None:
    stack = _stack()
    return stack[-1] if stack else None


def accumulate(grads: dict, t: Tensor, g: np.ndarray) -> None:
    """Add g to the gradient stored for t, creating the entry if needed.

    Entries are replaced, never mutated in place, so a stored array may alias
    the gradient that produced it without risk of corruption.
    """
    if not t.requires_grad:
        return
    prev = grads.get(t)
    grads[t] = g if prev is None else prev + g


def backward(tape: Tape, loss: Tensor) -> dict:
    """Replay the tape in reverse from a scalar loss.

    Returns a map from every requires_grad leaf tensor that influences the
    loss to its gradient. Gradients accumulate additively across multiple
    uses of the same tensor.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    produced = set()
    for rec in tape._records:
        for out in rec.outputs:
            produced.add(id(out))
    if id(loss) not in produced:
        raise ContractError("loss was not produced by an operation recorded on this tape")
    grads: dict[Tensor, np.ndarray] = {loss: np.ones_like(loss.data)}
    for rec in reversed(tape._records):
        grad_outs = tuple(grads.pop(out, None) for out in rec.outputs)
        if all(g is None for g in grad_outs):
            continue
        rec.backprop(grad_outs, grads)
    return grads
