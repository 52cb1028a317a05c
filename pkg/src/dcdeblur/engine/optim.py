"""Parameters and the bias-corrected adaptive-moment update."""

from __future__ import annotations

import numpy as np

from ..errors import StateError
from .tensor import Tensor


class Parameter:
    """A named trainable tensor plus its optimizer moments.

    Moments are zero-initialized and live in the same float width as the
    value so checkpoints round-trip exactly.
    """

    __slots__ = ("name", "value", "first_moment", "second_moment", "step_count")

    def __init__(self, name: str, array: np.ndarray):
        self.name = name
        self.value = Tensor(array, requires_grad=True)
        self.first_moment = np.zeros_like(self.value.data)
        self.second_moment = np.zeros_like(self.value.data)
        self.step_count = 0

    @property
    def grad(self):
        return self.value.grad

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={tuple(self.value.shape)}, t={self.step_count})"


def adam_step(params: list[Parameter], lr: float = 1e-4, beta1: float = 0.5,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One in-place Adam update over `params`; grads are consumed and cleared.

    Defaults follow the adversarial-training convention (beta1=0.5).
    """
    for p in params:
        if p.value.grad is None:
            raise StateError(f"adam_step: parameter {p.name!r} has no accumulated gradient")
    for p in params:
        g = p.value.grad
        p.first_moment *= beta1
        p.first_moment += (1.0 - beta1) * g
        p.second_moment *= beta2
        p.second_moment += (1.0 - beta2) * (g * g)
        p.step_count += 1
        m_hat = p.first_moment / (1.0 - beta1 ** p.step_count)
        v_hat = p.second_moment / (1.0 - beta2 ** p.step_count)
        p.value.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.value.grad = None
