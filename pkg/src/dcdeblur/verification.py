"""Registered gradient checks for every differentiable operation.

Each check builds a deterministic scalar target plus the tensors to
perturb, then compares reverse-mode gradients against central finite
differences. Tolerances assume float64 arithmetic: 1e-4 for pointwise and
reduction ops, 1e-3 for convolution, batch-norm, and the dark-channel loss
(whose argmin routing makes finite differences slightly noisier). Values
feeding nonsmooth points (ReLU kinks, L1 zeros, minimum ties) are sampled
away from them, since finite differences are meaningless across a kink.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .dark_channel import dark_channel_loss
from .engine import (
    RunningStats,
    Tensor,
    batch_norm,
    concat_channels,
    conv2d,
    dropout,
    gradcheck_report,
    leaky_relu,
    mean_all,
    min_pool_channels_window,
    mul,
    reduce_l1,
    reduce_l2sq,
    sigmoid,
    sum_all,
    tanh,
    transposed_conv2d,
)
from .networks import NetworkSpec, build_discriminator, build_generator
from .rng import derive_rng
from .training import TrainConfig, discriminator_loss, generator_loss


@dataclass
class OpCheck:
    name: str
    tolerance: float
    step: float
    build: Callable  # seed -> (f, inputs)


@dataclass
class CheckResult:
    name: str
    seed: int
    tolerance: float
    max_rel_error: float
    detail: str

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def _t(rng, shape, lo=-1.0, hi=1.0) -> Tensor:
    return Tensor(rng.uniform(lo, hi, size=shape), requires_grad=True)


def _square_mean(x: Tensor) -> Tensor:
    return mean_all(mul(x, x))


def _build_conv(seed):
    rng = derive_rng(seed, 11)
    x = _t(rng, (2, 3, 6, 6))
    w = _t(rng, (4, 3, 3, 3))
    b = _t(rng, (4,))
    return (lambda xx, ww, bb: _square_mean(conv2d(xx, ww, bb, stride=2, padding=1)),
            [x, w, b])


def _build_tconv(seed):
    rng = derive_rng(seed, 12)
    x = _t(rng, (2, 4, 3, 3))
    w = _t(rng, (4, 3, 3, 3))
    b = _t(rng, (3,))
    return (lambda xx, ww, bb: _square_mean(
        transposed_conv2d(xx, ww, bb, stride=2, padding=1, output_padding=1)), [x, w, b])


def _build_batch_norm(seed):
    rng = derive_rng(seed, 13)
    x = _t(rng, (2, 3, 4, 4))
    gamma = Tensor(rng.uniform(0.5, 1.5, size=3), requires_grad=True)
    beta = _t(rng, (3,))
    return (lambda xx, gg, bb: _square_mean(batch_norm(xx, gg, bb, "train", RunningStats())),
            [x, gamma, beta])


def _away_from_zero(rng, shape, margin=0.15):
    signs = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return Tensor(signs * rng.uniform(margin, 1.0, size=shape), requires_grad=True)


def _build_leaky_relu(seed):
    rng = derive_rng(seed, 14)
    x = _away_from_zero(rng, (3, 2, 5, 5))
    return lambda xx: _square_mean(leaky_relu(xx, 0.2)), [x]


def _build_sigmoid(seed):
    rng = derive_rng(seed, 15)
    x = _t(rng, (4, 7), lo=-3.0, hi=3.0)
    return lambda xx: sum_all(sigmoid(xx)), [x]


def _build_tanh(seed):
    rng = derive_rng(seed, 16)
    x = _t(rng, (4, 7), lo=-2.0, hi=2.0)
    return lambda xx: sum_all(tanh(xx)), [x]


def _build_dropout(seed):
    rng = derive_rng(seed, 17)
    x = _t(rng, (3, 4, 4))
    # the mask is re-derived identically on every call, so f is deterministic
    return (lambda xx: _square_mean(dropout(xx, 0.4, "train", derive_rng(seed, 170))), [x])


def _spread_values(rng, shape, min_gap=2e-3):
    """Distinct values with pairwise gaps, so argmin ties cannot flip under FD."""
    n = int(np.prod(shape))
    base = np.sort(rng.uniform(0.0, 1.0, size=n))
    base += np.arange(n) * min_gap
    base /= base.max()
    return rng.permutation(base).reshape(shape)


def _build_min_pool(seed):
    rng = derive_rng(seed, 18)
    x = Tensor(_spread_values(rng, (1, 3, 8, 8)), requires_grad=True)
    return (lambda xx: _square_mean(min_pool_channels_window(xx, 3)[0]), [x])


def _build_dark_channel(seed):
    rng = derive_rng(seed, 19)
    restored = Tensor(_spread_values(rng, (1, 3, 8, 8)) * 2.0 - 1.0, requires_grad=True)
    sharp = Tensor(_spread_values(derive_rng(seed, 20), (1, 3, 8, 8)) * 2.0 - 1.0)
    return (lambda rr: dark_channel_loss(rr, sharp, window=3, input_range=(-1.0, 1.0)),
            [restored])


def _build_concat(seed):
    rng = derive_rng(seed, 21)
    a = _t(rng, (2, 2, 4, 4))
    b = _t(rng, (2, 3, 4, 4))
    return lambda aa, bb: _square_mean(concat_channels(aa, bb)), [a, b]


def _build_reduce_l1(seed):
    rng = derive_rng(seed, 22)
    a = _t(rng, (3, 5, 5))
    offset = np.where(rng.random((3, 5, 5)) < 0.5, -1.0, 1.0) * rng.uniform(0.2, 0.8, (3, 5, 5))
    b = Tensor(a.data + offset, requires_grad=True)
    return lambda aa, bb: reduce_l1(aa, bb), [a, b]


def _build_reduce_l2sq(seed):
    rng = derive_rng(seed, 23)
    a = _t(rng, (3, 5, 5))
    b = _t(rng, (3, 5, 5))
    return lambda aa, bb: reduce_l2sq(aa, bb), [a, b]


def _build_discriminator_loss(seed):
    rng = derive_rng(seed, 24)
    real_logits = _t(rng, (4, 1, 1, 1), lo=-2.0, hi=2.0)
    fake_logits = _t(rng, (4, 1, 1, 1), lo=-2.0, hi=2.0)
    return (lambda rr, ff: discriminator_loss(sigmoid(rr), sigmoid(ff)),
            [real_logits, fake_logits])


OP_CHECKS: tuple[OpCheck, ...] = (
    OpCheck("conv2d", 1e-3, 1e-6, _build_conv),
    OpCheck("transposed_conv2d", 1e-3, 1e-6, _build_tconv),
    OpCheck("batch_norm", 1e-3, 1e-6, _build_batch_norm),
    OpCheck("leaky_relu", 1e-4, 1e-6, _build_leaky_relu),
    OpCheck("sigmoid", 1e-4, 1e-6, _build_sigmoid),
    OpCheck("tanh", 1e-4, 1e-6, _build_tanh),
    OpCheck("dropout", 1e-4, 1e-6, _build_dropout),
    OpCheck("min_pool_channels_window", 1e-3, 1e-5, _build_min_pool),
    OpCheck("dark_channel_loss", 1e-3, 1e-5, _build_dark_channel),
    OpCheck("concat_channels", 1e-4, 1e-6, _build_concat),
    OpCheck("reduce_l1", 1e-4, 1e-6, _build_reduce_l1),
    OpCheck("reduce_l2sq", 1e-4, 1e-6, _build_reduce_l2sq),
    OpCheck("discriminator_loss", 1e-4, 1e-6, _build_discriminator_loss),
)


def toy_spec(kernel: int = 3) -> NetworkSpec:
    """Two-block 16 px ladder for end-to-end checks; dropout off for determinism."""
    return NetworkSpec(encoder_filters=(4, 8), kernel=kernel, stride=2,
                       dropout_rate=0.0, image_size=16)


def _build_generator_forward(seed):
    spec = toy_spec()
    gen = build_generator(spec, derive_rng(seed, 30))
    x = Tensor(derive_rng(seed, 31).uniform(-1, 1, size=(1, 3, 16, 16)))
    params = [p.value for p in gen.parameters()]
    return lambda *values: _square_mean(gen.forward(x)), params


def _build_discriminator_forward(seed):
    spec = toy_spec()
    disc = build_discriminator(spec, derive_rng(seed, 32))
    rng = derive_rng(seed, 33)
    cand = Tensor(rng.uniform(-1, 1, size=(1, 3, 16, 16)))
    cond = Tensor(rng.uniform(-1, 1, size=(1, 3, 16, 16)))
    params = [p.value for p in disc.parameters()]
    return lambda *values: sum_all(disc.forward(cand, cond)), params


NETWORK_CHECKS: tuple[OpCheck, ...] = (
    OpCheck("generator_forward", 1e-2, 1e-5, _build_generator_forward),
    OpCheck("discriminator_forward", 1e-2, 1e-5, _build_discriminator_forward),
)


def _build_generator_loss(seed):
    # Weights are scaled 8x so the toy generator's output has real contrast
    # (argmin gaps in the dark-channel windows), and the ground truth sits a
    # fixed 0.05 off the base output so no L1 kink flips under perturbation.
    spec = toy_spec()
    gen = build_generator(spec, derive_rng(seed, 34))
    disc = build_discriminator(spec, derive_rng(seed, 35))
    for p in gen.parameters():
        if p.name.endswith(".weight"):
            p.value.data *= 8.0
    rng = derive_rng(seed, 36)
    blurry = Tensor(rng.uniform(-1, 1, size=(1, 3, 16, 16)))
    base = gen.forward(blurry).data
    sharp = Tensor(np.where(base > 0, base - 0.05, base + 0.05))
    cfg = TrainConfig(lambda1=100.0, lambda2=250.0, dc_window=3, crop=16)
    params = [p.value for p in gen.parameters()]

    def f(*values):
        fake = gen.forward(blurry)
        d_fake = disc.forward(fake, blurry)
        total, _ = generator_loss(d_fake, fake, sharp, cfg)
        return total

    return f, params


# step 1e-5: batch-norm centers preactivations exactly on the leaky-ReLU
# kink, so larger steps make the finite-difference oracle itself noisy at
# O(step) and lambda1 amplifies that noise past any useful tolerance.
LOSS_CHECKS: tuple[OpCheck, ...] = (
    OpCheck("generator_loss_composite", 1e-2, 1e-5, _build_generator_loss),
    OpCheck("discriminator_loss", 1e-4, 1e-6, _build_discriminator_loss),
)


def run_checks(checks: Iterable[OpCheck], seeds: Iterable[int]) -> list[CheckResult]:
    results = []
    for check in checks:
        for seed in seeds:
            f, inputs = check.build(seed)
            report = gradcheck_report(f, inputs, check.step)
            results.append(CheckResult(
                name=check.name, seed=seed, tolerance=check.tolerance,
                max_rel_error=report.max_rel_error, detail=report.describe()))
    return results


def scope_checks(scope: str) -> tuple[OpCheck, ...]:
    if scope == "op":
        return OP_CHECKS
    if scope == "network":
        return NETWORK_CHECKS
    if scope == "loss":
        return LOSS_CHECKS
    raise ValueError(f"unknown gradcheck scope {scope!r}")
