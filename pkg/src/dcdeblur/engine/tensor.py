"""Dense tensors and the reverse-mode tape.

A Tensor wraps a row-major numpy array. Differentiable ops (see ops.py)
record a Node on the currently active Tape; `Tape.backward` replays the
nodes in reverse execution order, which is a valid reverse topological
order, visiting each node exactly once.

All arithmetic happens in one global float width. The default is float64
(the width the gradient-check tolerances are stated for); training
typically switches to float32, which also makes the 32-bit checkpoint
format a lossless round-trip.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ConfigError, ShapeError

_WIDTHS = {"float32": np.float32, "float64": np.float64}
_dtype = np.float64


def set_float_width(width: str) -> None:
    """Select the arithmetic width for all subsequently created tensors."""
    global _dtype
    if width not in _WIDTHS:
        raise ConfigError(f"unknown float width {width!r}; expected one of {sorted(_WIDTHS)}")
    _dtype = _WIDTHS[width]


def default_dtype() -> type:
    return _dtype


@contextmanager
def float_width(width: str):
    """Temporarily switch the arithmetic width."""
    previous = "float64" if _dtype is np.float64 else "float32"
    set_float_width(width)
    try:
        yield
    finally:
        set_float_width(previous)


class Tensor:
    """N-dimensional float array, optionally tracked for gradients.

    Tensors produced by ops are immutable by convention; the optimizer's
    in-place parameter update is the single sanctioned mutation.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Same values, cut off from the tape (no gradient flows through)."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={tuple(self.shape)}{flag})"


class Node:
    """One taped operation: its inputs, output, backward closure, and context.

    `ctx` keeps forward artifacts a caller may inspect (argmin maps, dropout
    masks, batch statistics); the backward closure captures what it needs.
    """

    __slots__ = ("op", "inputs", "output", "backward_fn", "ctx")

    def __init__(self, op: str, inputs: Sequence[Tensor], output: Tensor,
                 backward_fn: Callable, ctx: Optional[dict] = None):
        self.op = op
        self.inputs = tuple(inputs)
        self.output = output
        self.backward_fn = backward_fn
        self.ctx = ctx or {}


_TAPES: list["Tape"] = []


class Tape:
    """Execution-ordered record of differentiable operations."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        popped = _TAPES.pop()
        assert popped is self, "tapes must unwind in LIFO order"
        return False

    def backward(self, root: Tensor, seed: Optional[np.ndarray] = None) -> None:
        """Accumulate gradients of `root` into every contributing tensor.

        One reversed sweep over the recorded nodes; a node whose output never
        received a gradient is dead wood and is skipped.
        """
        if seed is None:
            seed = np.ones_like(root.data)
        root.grad = seed if root.grad is None else root.grad + seed
        for node in reversed(self.nodes):
            gout = node.output.grad
            if gout is None:
                continue
            grads = node.backward_fn(gout)
            for tensor, grad in zip(node.inputs, grads):
                if grad is None or not tensor.requires_grad:
                    continue
                tensor.grad = grad if tensor.grad is None else tensor.grad + grad

    def op_names(self) -> list[str]:
        return [node.op for node in self.nodes]


def active_tape() -> Optional[Tape]:
    return _TAPES[-1] if _TAPES else None


def record(op: str, inputs: Sequence[Tensor], output: Tensor,
           backward_fn: Callable, ctx: Optional[dict] = None) -> None:
    """Append a node to the active tape, if any."""
    tape = active_tape()
    if tape is not None:
        tape.nodes.append(Node(op, inputs, output, backward_fn, ctx))


def tracking(*inputs: Tensor) -> bool:
    """True when a tape is active and some input wants gradients."""
    return active_tape() is not None and any(t.requires_grad for t in inputs)


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None
