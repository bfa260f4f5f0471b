"""Reverse-mode autodiff core: Tensor values and the operation Tape.

A Tensor wraps a numpy array plus an optional gradient buffer. Operations
(see ops.py) compute forward values eagerly and, when handed a Tape and at
least one input requires gradients, push a record holding a backward
closure. `backward()` replays the tape in reverse, visiting each record
exactly once.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericError

# When True, every op output is checked for NaN/Inf (slow; test/debug aid).
_DEBUG_CHECKS = False


def set_debug_checks(enabled: bool) -> None:
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


def debug_checks_enabled() -> bool:
    return _DEBUG_CHECKS


class Tensor:
    """N-dimensional value with an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"


class TapeRecord:
    __slots__ = ("outputs", "inputs", "backward_fn")

    def __init__(self, outputs, inputs, backward_fn):
        self.outputs = outputs
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of executed operations.

    Topological by construction: an operation's inputs must already exist
    when it runs, and recording an op whose output was previously used on
    this tape (which would create a cycle) is a hard error.
    """

    def __init__(self):
        self.records: list[TapeRecord] = []
        self._seen_ids: set[int] = set()

    def __len__(self):
        return len(self.records)

    def record(self, outputs, inputs, backward_fn) -> None:
        """Push one operation. `backward_fn(*out_grads)` must accumulate into inputs."""
        for out in outputs:
            if id(out) in self._seen_ids:
                raise NumericError(
                    "malformed tape: operation output was already used on this tape"
                )
        for t in inputs:
            self._seen_ids.add(id(t))
        for out in outputs:
            self._seen_ids.add(id(out))
        self.records.append(TapeRecord(tuple(outputs), tuple(inputs), backward_fn))


def accumulate_grad(t: Tensor, g: np.ndarray) -> None:
    """Add `g` into t.grad (never in place; views of upstream grads stay safe)."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def backward(tape: Tape, loss: Tensor) -> None:
    """Backpropagate d(loss)/d(tensor) into every requires_grad Tensor on the tape.

    Requires a scalar loss produced by operations recorded on `tape`.
    Tensors on the tape that loss does not reach end with zero gradients.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if not np.all(np.isfinite(loss.data)):
        raise NumericError("non-finite loss")
    loss.grad = np.ones_like(loss.data)
    for rec in reversed(tape.records):
        grads = [out.grad for out in rec.outputs]
        if all(g is None for g in grads):
            continue
        grads = [
            g if g is not None else np.zeros_like(out.data)
            for g, out in zip(grads, rec.outputs)
        ]
        rec.backward_fn(*grads)
    # Reachability contract: anything recorded but untouched gets zeros.
    for rec in tape.records:
        for t in rec.inputs:
            if t.requires_grad and t.grad is None:
                t.grad = np.zeros_like(t.data)


def check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")
    return arr


def maybe_check(arr: np.ndarray, what: str) -> np.ndarray:
    if _DEBUG_CHECKS:
        check_finite(arr, what)
    return arr
