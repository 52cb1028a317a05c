"""Synthetic paired-dataset construction.

Takes a directory of sharp images, blurs each with a seeded random motion
kernel, optionally adds gaussian noise to the blurry member, and writes
the paired blur//sharp/ tree plus a manifest recording every kernel and
seed so any pair can be regenerated.
"""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import DataError
from ..rng import KERNEL, NOISE, derive_rng
from .imageio import load_image, save_image
from .kernels import add_gaussian_noise, apply_blur, random_motion_kernel
from .pipeline import IMAGE_SUFFIXES


def generate_dataset(sharp_dir, out_dir, count: int, kernel_length: float = 9.0,
                     noise_variance: float = 0.0, seed: int = 0) -> dict:
    """Write `count` blur/sharp pairs under `out_dir`; returns the manifest.

    Sources cycle deterministically when count exceeds the number of sharp
    images. The manifest (manifest.json) stores the full kernel taps, the
    derivation path of each random stream, and the noise setting.
    """
    sharp_dir = Path(sharp_dir)
    out_dir = Path(out_dir)
    sources = [p for p in sorted(sharp_dir.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES]
    if not sources:
        raise DataError(f"{sharp_dir}: no .png/.ppm images to blur")
    if count < 1:
        raise DataError(f"count must be >= 1, got {count}")

    (out_dir / "blur").mkdir(parents=True, exist_ok=True)
    (out_dir / "sharp").mkdir(parents=True, exist_ok=True)
    manifest = {
        "seed": int(seed),
        "count": int(count),
        "kernel_length": float(kernel_length),
        "noise_variance": float(noise_variance),
        "pairs": [],
    }
    for i in range(count):
        source = sources[i % len(sources)]
        name = f"{i:04d}_{source.stem}.png"
        sharp = load_image(source)
        kernel = random_motion_kernel(kernel_length, derive_rng(seed, KERNEL, i))
        blurry = apply_blur(sharp, kernel)
        if noise_variance > 0:
            blurry = add_gaussian_noise(blurry, noise_variance, derive_rng(seed, NOISE, i))
        save_image(sharp, out_dir / "sharp" / name)
        save_image(blurry, out_dir / "blur" / name)
        manifest["pairs"].append({
            "id": name,
            "source": str(source),
            "kernel_rng": [int(seed), KERNEL, i],
            "noise_rng": [int(seed), NOISE, i] if noise_variance > 0 else None,
            "kernel_anchor": list(kernel.anchor),
            "kernel_taps": kernel.taps.tolist(),
        })
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n",
                                           encoding="utf-8")
    return manifest
