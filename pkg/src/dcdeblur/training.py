"""Loss assembly, the alternating update schedule, and the training loop.

Both losses are written as quantities to minimize. The discriminator
minimizes -E[log D(real) + log(1 - D(fake))]; the generator minimizes the
saturating adversarial term E[log(1 - D(fake))] plus lambda1 times the L1
content distance and lambda2 times the L2 dark-channel distance. Sigmoid
outputs are clamped to [eps, 1-eps] before any log, which keeps the
saturating form finite even when the discriminator wins early.

Each optimization iteration performs `d_steps_per_iter` discriminator
updates followed by `g_steps_per_iter` generator updates, every update
with a fresh generator forward pass.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .dark_channel import dark_channel_loss
from .data.pipeline import Batch, dataset_iter
from .engine import (
    Tape,
    Tensor,
    adam_step,
    clamp,
    log,
    mean_all,
    reduce_l1,
    zero_grads,
)
from .errors import ConfigError, DataError, NumericError
from .networks import NetworkSpec, build_discriminator, build_generator
from .rng import DROPOUT, INIT_DISCRIMINATOR, INIT_GENERATOR, derive_rng

logger = logging.getLogger(__name__)

PROB_EPS = 1e-7  # clamp for sigmoid outputs entering a log


@dataclass
class TrainConfig:
    """Every training hyperparameter in one validated record.

    Defaults are desk-scale: crop 64, batch 1, a few hundred iterations on
    tiny data. The full-scale protocol (crop 256 after x2 downsampling,
    lambda1=100, lambda2=250, 1 D step + 2 G steps per iteration) uses the
    same fields.
    """
    lambda1: float = 100.0
    lambda2: float = 250.0
    dc_window: int = 15
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    d_steps_per_iter: int = 1
    g_steps_per_iter: int = 2
    crop: int = 64
    downsample_factor: int = 2
    noise_variance: float = 0.0
    epochs: int = 200
    batch: int = 1
    seed: int = 42
    checkpoint_every: int = 100

    def violations(self, spec: NetworkSpec | None = None) -> list[str]:
        problems = []
        if self.lambda1 < 0 or self.lambda2 < 0:
            problems.append(f"lambda1/lambda2 must be >= 0, got {self.lambda1}/{self.lambda2}")
        if self.dc_window < 1 or self.dc_window % 2 == 0:
            problems.append(f"dc_window must be a positive odd int, got {self.dc_window}")
        if self.lr < 0:
            problems.append(f"lr must be >= 0, got {self.lr}")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            problems.append(f"betas must lie in [0, 1), got {self.beta1}/{self.beta2}")
        if self.eps <= 0:
            problems.append(f"eps must be > 0, got {self.eps}")
        if self.d_steps_per_iter < 0 or self.g_steps_per_iter < 0:
            problems.append("d/g steps per iteration must be >= 0")
        if self.crop < 1:
            problems.append(f"crop must be positive, got {self.crop}")
        if self.downsample_factor not in (1, 2):
            problems.append(f"downsample_factor must be 1 or 2, got {self.downsample_factor}")
        if self.noise_variance < 0:
            problems.append(f"noise_variance must be >= 0, got {self.noise_variance}")
        if self.epochs < 1:
            problems.append(f"epochs must be >= 1, got {self.epochs}")
        if self.batch < 1:
            problems.append(f"batch must be >= 1, got {self.batch}")
        if self.seed < 0:
            problems.append(f"seed must be >= 0, got {self.seed}")
        if self.checkpoint_every < 0:
            problems.append(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")
        if spec is not None:
            divisor = spec.stride ** spec.depth
            if self.crop % divisor != 0:
                problems.append(f"crop {self.crop} must be divisible by stride**depth = {divisor}")
        return problems

    def validate(self, spec: NetworkSpec | None = None) -> None:
        problems = self.violations(spec)
        if problems:
            raise ConfigError("; ".join(problems))


@dataclass
class StepReport:
    iteration: int
    d_loss: float
    g_adv: float
    g_content: float
    g_darkchannel: float
    g_total: float
    wall_ms: float

    def log_record(self, epoch: int) -> dict:
        # wall_ms stays out: log files must be bit-identical across reruns
        return {
            "iteration": self.iteration,
            "epoch": epoch,
            "d_loss": self.d_loss,
            "g_adv": self.g_adv,
            "g_content": self.g_content,
            "g_darkchannel": self.g_darkchannel,
            "g_total": self.g_total,
        }


def _check_probability(name: str, t: Tensor) -> None:
    if np.any(t.data < 0.0) or np.any(t.data > 1.0):
        raise NumericError(f"{name} must lie in [0, 1] before clamping, "
                           f"got range [{t.data.min()}, {t.data.max()}]")


def _check_finite(term: str, value: float) -> float:
    if not np.isfinite(value):
        raise NumericError(f"loss term {term!r} is not finite: {value}")
    return value


def discriminator_loss(d_real: Tensor, d_fake: Tensor) -> Tensor:
    """-mean[log D(real) + log(1 - D(fake))]; the fake path must be detached."""
    _check_probability("d_real", d_real)
    _check_probability("d_fake", d_fake)
    dr = clamp(d_real, PROB_EPS, 1.0 - PROB_EPS)
    df = clamp(d_fake, PROB_EPS, 1.0 - PROB_EPS)
    return -(mean_all(log(dr)) + mean_all(log(1.0 - df)))


def generator_loss(d_fake: Tensor, restored: Tensor, sharp_gt: Tensor,
                   cfg: TrainConfig) -> tuple[Tensor, dict]:
    """Saturating adversarial term + lambda1 * L1 + lambda2 * dark-channel L2.

    Gradients flow to the generator only (the ground truth is detached; the
    discriminator's parameters are simply not stepped afterwards). The
    dark-channel map is skipped entirely when lambda2 == 0.
    """
    _check_probability("d_fake", d_fake)
    adv = mean_all(log(1.0 - clamp(d_fake, PROB_EPS, 1.0 - PROB_EPS)))
    content = reduce_l1(restored, sharp_gt.detach())
    parts = {
        "g_adv": _check_finite("adversarial", float(adv.data)),
        "g_content": _check_finite("content", float(content.data)),
    }
    total = adv + cfg.lambda1 * content
    if cfg.lambda2 > 0:
        dc = dark_channel_loss(restored, sharp_gt, cfg.dc_window, input_range=(-1.0, 1.0))
        parts["g_darkchannel"] = _check_finite("dark_channel", float(dc.data))
        total = total + cfg.lambda2 * dc
    else:
        parts["g_darkchannel"] = 0.0
    parts["g_total"] = _check_finite("total", float(total.data))
    expected = parts["g_adv"] + cfg.lambda1 * parts["g_content"] + cfg.lambda2 * parts["g_darkchannel"]
    if abs(parts["g_total"] - expected) > 1e-6 * max(1.0, abs(expected)):
        raise NumericError(f"loss decomposition broke: total {parts['g_total']} "
                           f"vs recomposed {expected}")
    return total, parts


def _all_params(G, D):
    return [p.value for p in G.parameters()] + [p.value for p in D.parameters()]


def train_step(G, D, batch: Batch, cfg: TrainConfig, iteration: int = 0) -> StepReport:
    """One iteration: d_steps_per_iter D updates, then g_steps_per_iter G updates.

    Dropout masks are derived from (seed, iteration, phase, substep), so a
    resumed run replays the identical masks.
    """
    t0 = time.perf_counter()
    blurry = Tensor(batch.blurry.data * 2.0 - 1.0)  # [0,1] -> network range
    sharp = Tensor(batch.sharp.data * 2.0 - 1.0)

    d_loss_value = 0.0
    for k in range(cfg.d_steps_per_iter):
        fake = G.forward(blurry, rng=derive_rng(cfg.seed, DROPOUT, iteration, 0, k))
        with Tape() as tape:
            d_real = D.forward(sharp, blurry)
            d_fake = D.forward(fake.detach(), blurry)
            d_loss = discriminator_loss(d_real, d_fake)
        zero_grads(_all_params(G, D))
        tape.backward(d_loss)
        adam_step(D.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
        d_loss_value = _check_finite("discriminator", float(d_loss.data))

    parts = {"g_adv": 0.0, "g_content": 0.0, "g_darkchannel": 0.0, "g_total": 0.0}
    for j in range(cfg.g_steps_per_iter):
        with Tape() as tape:
            fake = G.forward(blurry, rng=derive_rng(cfg.seed, DROPOUT, iteration, 1, j))
            d_fake = D.forward(fake, blurry)
            total, parts = generator_loss(d_fake, fake, sharp, cfg)
        zero_grads(_all_params(G, D))
        tape.backward(total)
        adam_step(G.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)

    wall_ms = (time.perf_counter() - t0) * 1000.0
    return StepReport(iteration=iteration, d_loss=d_loss_value,
                      g_adv=parts["g_adv"], g_content=parts["g_content"],
                      g_darkchannel=parts["g_darkchannel"], g_total=parts["g_total"],
                      wall_ms=wall_ms)


def train_loop(data_root, cfg: TrainConfig, spec: NetworkSpec, checkpoint_dir,
               resume_from=None, log_path=None) -> Path:
    """Seeded epochs of train_step over augmented crops, with checkpoints.

    Emits one JSON line per iteration to `log_path` (default
    <checkpoint_dir>/train_log.jsonl). On KeyboardInterrupt, flushes a
    final checkpoint before re-raising. Returns the final checkpoint path.
    """
    checkpoint_dir = Path(checkpoint_dir)
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    log_path = Path(log_path) if log_path else checkpoint_dir / "train_log.jsonl"

    disc_spec = dataclasses.replace(spec, image_size=cfg.crop)
    cfg.validate(spec)

    if resume_from is not None:
        G, D, meta = load_checkpoint(resume_from, spec, disc_spec)
        iteration = int(meta.get("iteration", 0))
        start_epoch = int(meta.get("epoch", 0))
        start_batch = int(meta.get("batch_index", 0))
        logger.info("resumed from %s at iteration %d (epoch %d, batch %d)",
                    resume_from, iteration, start_epoch, start_batch)
    else:
        G = build_generator(spec, derive_rng(cfg.seed, INIT_GENERATOR))
        D = build_discriminator(disc_spec, derive_rng(cfg.seed, INIT_DISCRIMINATOR))
        iteration, start_epoch, start_batch = 0, 0, 0

    G.set_mode("train")
    D.set_mode("train")

    def flush(epoch: int, next_batch: int, name: str) -> Path:
        meta = {"iteration": iteration, "epoch": epoch, "batch_index": next_batch}
        return save_checkpoint(G, D, checkpoint_dir / name, extra=meta)

    with open(log_path, "a", encoding="utf-8") as log_file:
        try:
            for epoch in range(start_epoch, cfg.epochs):
                yielded = 0
                for bi, batch in enumerate(dataset_iter(data_root, cfg, epoch)):
                    yielded += 1
                    if epoch == start_epoch and bi < start_batch:
                        continue
                    report = train_step(G, D, batch, cfg, iteration)
                    iteration += 1
                    log_file.write(json.dumps(report.log_record(epoch)) + "\n")
                    log_file.flush()
                    if cfg.checkpoint_every and iteration % cfg.checkpoint_every == 0:
                        flush(epoch, bi + 1, f"ckpt_{iteration:06d}.dgc")
                if yielded == 0:
                    raise DataError(f"epoch {epoch}: no usable batches in {data_root}")
        except KeyboardInterrupt:
            logger.warning("interrupted; flushing final checkpoint")
            flush(cfg.epochs, 0, "final.dgc")
            raise
    return flush(cfg.epochs, 0, "final.dgc")
