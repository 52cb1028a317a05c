"""PSNR and SSIM scoring plus the dataset evaluation report.

SSIM is the canonical single-scale variant: 11x11 gaussian window with
sigma 1.5, K1=0.01, K2=0.03, dynamic range 1, computed per channel over
valid (unpadded) window positions and averaged. Those constants are frozen
so scores stay comparable across runs.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .data.kernels import add_gaussian_noise
from .data.pipeline import downsample2, match_pairs
from .data.imageio import load_image
from .engine import Tensor
from .errors import DataError, ShapeError
from .networks import NetworkSpec, restore_image
from .rng import EVAL_NOISE, derive_rng

PSNR_CAP_DB = 99.0  # reported for zero (or vanishing) MSE; keeps reports sortable
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _as_array(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)


def psnr(a, b) -> float:
    """10*log10(1/MSE) with peak 1.0, capped at 99 dB."""
    xa, xb = _as_array(a), _as_array(b)
    if xa.shape != xb.shape:
        raise ShapeError(f"psnr requires equal shapes, got {xa.shape} vs {xb.shape}")
    mse = float(np.mean((xa - xb) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(float(10.0 * np.log10(1.0 / mse)), PSNR_CAP_DB)


def _gaussian_taps(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    xs = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    taps = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def _filter_valid(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation of a 2-D image with a 1-D window."""
    rows = np.lib.stride_tricks.sliding_window_view(img, len(taps), axis=0)
    tmp = rows @ taps
    cols = np.lib.stride_tricks.sliding_window_view(tmp, len(taps), axis=1)
    return cols @ taps


def ssim(a, b) -> float:
    """Mean structural similarity over valid window positions, channel-averaged."""
    xa, xb = _as_array(a), _as_array(b)
    if xa.shape != xb.shape:
        raise ShapeError(f"ssim requires equal shapes, got {xa.shape} vs {xb.shape}")
    if xa.ndim == 2:
        xa, xb = xa[None], xb[None]
    if xa.ndim != 3:
        raise ShapeError(f"ssim expects (C,H,W) or (H,W), got shape {xa.shape}")
    if min(xa.shape[1], xa.shape[2]) < SSIM_WINDOW:
        raise ShapeError(f"ssim needs images of at least {SSIM_WINDOW} px per side, "
                         f"got {xa.shape[1]}x{xa.shape[2]}")
    taps = _gaussian_taps()
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    scores = []
    for ch in range(xa.shape[0]):
        x, y = xa[ch], xb[ch]
        mu_x = _filter_valid(x, taps)
        mu_y = _filter_valid(y, taps)
        var_x = _filter_valid(x * x, taps) - mu_x * mu_x
        var_y = _filter_valid(y * y, taps) - mu_y * mu_y
        cov = _filter_valid(x * y, taps) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


@dataclass
class EvalReport:
    """Per-image scores, their means, and the evaluated configuration."""
    checkpoint: str
    dataset: str
    noise_variance: float
    per_image: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    mean_psnr: float = 0.0
    mean_ssim: float = 0.0

    def finalize(self) -> "EvalReport":
        if self.per_image:
            self.mean_psnr = float(np.mean([row["psnr"] for row in self.per_image]))
            self.mean_ssim = float(np.mean([row["ssim"] for row in self.per_image]))
        return self

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2)

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


def evaluate(checkpoint_path, data_root, cfg, spec: NetworkSpec,
             noise_variance: float | None = None) -> EvalReport:
    """Score a generator checkpoint over every pair in a dataset.

    Follows the test protocol: images are downsampled by two (per
    cfg.downsample_factor), the blurry member optionally gets seeded
    gaussian noise, and the generator runs in infer mode. Per-image
    failures are recorded in the report instead of aborting; an empty
    dataset is fatal.
    """
    variance = cfg.noise_variance if noise_variance is None else noise_variance
    disc_spec = dataclasses.replace(spec, image_size=cfg.crop)
    gen, _, _ = load_checkpoint(checkpoint_path, spec, disc_spec)
    gen.set_mode("infer")

    names, sharp_dir, blur_dir = match_pairs(data_root)
    report = EvalReport(checkpoint=str(checkpoint_path), dataset=str(data_root),
                        noise_variance=float(variance))
    for index, name in enumerate(names):
        try:
            sharp = load_image(sharp_dir / name)
            blurry = load_image(blur_dir / name) if blur_dir else sharp
            if cfg.downsample_factor == 2:
                sharp = downsample2(sharp)
                blurry = downsample2(blurry)
            if variance > 0:
                blurry = add_gaussian_noise(blurry, variance,
                                            derive_rng(cfg.seed, EVAL_NOISE, index))
            restored = restore_image(gen, blurry)
            report.per_image.append({
                "id": name,
                "psnr": psnr(restored, sharp),
                "ssim": ssim(restored, sharp),
            })
        except Exception as exc:  # per-image resilience, by contract
            report.failures.append({"id": name, "error": str(exc)})
    if not report.per_image and report.failures:
        raise DataError(f"{data_root}: every image failed evaluation; "
                        f"first error: {report.failures[0]['error']}")
    return report.finalize()


def ablation_table(columns: dict[str, dict[str, EvalReport]]) -> str:
    """Text table in the four-column ablation layout.

    `columns` maps a column label (e.g. "dc0", "dc250") to its reports
    keyed by dataset condition ("Original", "Noisy").
    """
    labels = list(columns)
    conditions = []
    for reports in columns.values():
        for cond in reports:
            if cond not in conditions:
                conditions.append(cond)
    width = max([8] + [len(lab) + 2 for lab in labels])
    header = f"{'Dataset':<10}{'Metrics':<9}" + "".join(f"{lab:<{width}}" for lab in labels)
    lines = [header, "-" * len(header)]
    for cond in conditions:
        for metric, key, fmt in (("PSNR", "mean_psnr", "{:.2f}"), ("SSIM", "mean_ssim", "{:.4f}")):
            cells = []
            for lab in labels:
                rep = columns[lab].get(cond)
                cells.append(fmt.format(getattr(rep, key)) if rep else "-")
            dataset_cell = cond if metric == "PSNR" else ""
            lines.append(f"{dataset_cell:<10}{metric:<9}" + "".join(f"{c:<{width}}" for c in cells))
    return "\n".join(lines)
