"""Reverse-mode gradients versus central finite differences.

The harness perturbs every element of every input, so keep the inputs
small. Errors are normalized by max(|analytic|, |numeric|, 1), which keeps
the comparison meaningful for both tiny and large gradients; the stated
per-op tolerances assume float64 arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import NumericError, ShapeError
from .tensor import Tape, Tensor, zero_grads


@dataclass
class GradCheckReport:
    max_rel_error: float
    input_index: int
    flat_index: int
    analytic: float
    numeric: float

    def describe(self) -> str:
        return (f"worst element: input {self.input_index} flat index {self.flat_index}, "
                f"analytic {self.analytic:.6e} vs numeric {self.numeric:.6e} "
                f"(rel {self.max_rel_error:.3e})")


def _forward_value(f: Callable, inputs: Sequence[Tensor]) -> float:
    out = f(*inputs)
    if out.size != 1:
        raise ShapeError(f"gradcheck target must be scalar, got shape {out.shape}")
    return float(out.data.reshape(()))


def gradcheck_report(f: Callable, inputs: Sequence[Tensor], step: float) -> GradCheckReport:
    """Compare reverse-mode gradients of f against central differences."""
    for i, t in enumerate(inputs):
        if not t.requires_grad:
            raise ShapeError(f"gradcheck input {i} must have requires_grad=True")

    base = _forward_value(f, inputs)
    if _forward_value(f, inputs) != base:
        raise NumericError("gradcheck target is non-deterministic; fix its seeds first")

    zero_grads(t for t in inputs)
    with Tape() as tape:
        out = f(*inputs)
    tape.backward(out)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    worst = GradCheckReport(0.0, -1, -1, 0.0, 0.0)
    for i, t in enumerate(inputs):
        flat = t.data.reshape(-1)
        a_flat = analytic[i].reshape(-1)
        for j in range(flat.size):
            original = flat[j]
            flat[j] = original + step
            f_plus = _forward_value(f, inputs)
            flat[j] = original - step
            f_minus = _forward_value(f, inputs)
            flat[j] = original
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(a_flat[j])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1.0)
            if err > worst.max_rel_error:
                worst = GradCheckReport(err, i, j, a, numeric)
    return worst


def gradcheck(f: Callable, inputs: Sequence[Tensor], step: float) -> float:
    """Worst relative error between reverse-mode and finite-difference grads."""
    return gradcheck_report(f, inputs, step).max_rel_error
