"""Paired-image dataset: ingestion, augmentation, deterministic iteration.

Layout on disk: `<root>/blur/` and `<root>/sharp/` with matching
filenames (PNG or PPM). A root with only `sharp/` is also accepted; the
blurry member is then synthesized per sample with a seeded random motion
kernel.

Every augmentation draw comes from a stream derived from
(seed, stream, epoch, sample index in sorted filename order), so the
emitted pairs are a pure function of those coordinates: shuffling,
skipping, or parallel loading cannot change them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from ..engine import Tensor
from ..errors import DataError, ShapeError
from ..rng import CROP, KERNEL, NOISE, SHUFFLE, derive_rng
from .imageio import load_image
from .kernels import add_gaussian_noise, apply_blur, random_motion_kernel

logger = logging.getLogger(__name__)

SYNTH_KERNEL_LENGTH = 9.0  # on-the-fly blur when the root is sharp-only
IMAGE_SUFFIXES = (".png", ".ppm")


@dataclass
class AugmentationRecord:
    """How a sample was produced; offsets refer to the downsampled image."""
    crop_offset: Optional[tuple[int, int]] = None
    noise_seed: Optional[int] = None
    kernel_id: Optional[str] = None


@dataclass
class ImagePair:
    """Aligned (blurry, sharp) sample, both (3, H, W) in [0, 1]."""
    blurry: Tensor
    sharp: Tensor
    id: str
    augmentation_record: AugmentationRecord


@dataclass
class Batch:
    """Stacked (B, 3, H, W) tensors plus the per-sample pairs."""
    blurry: Tensor
    sharp: Tensor
    pairs: list


def downsample2(image: Tensor) -> Tensor:
    """2x2 box average; odd trailing rows/columns are dropped."""
    img = image.data if isinstance(image, Tensor) else np.asarray(image)
    if img.ndim != 3:
        raise ShapeError(f"downsample2 expects (C,H,W), got shape {img.shape}")
    c, h, w = img.shape
    h2, w2 = h // 2, w // 2
    if h2 < 1 or w2 < 1:
        raise ShapeError(f"image {h}x{w} too small to downsample")
    img = img[:, :h2 * 2, :w2 * 2]
    return Tensor(img.reshape(c, h2, 2, w2, 2).mean(axis=(2, 4)))


def random_crop_pair(pair: ImagePair, size: int, rng: np.random.Generator) -> ImagePair:
    """Crop both members at one shared offset; the offset is recorded."""
    c, h, w = pair.blurry.shape
    if h < size or w < size:
        raise DataError(f"image {pair.id!r} is {h}x{w}, smaller than crop size {size}")
    y0 = int(rng.integers(0, h - size + 1))
    x0 = int(rng.integers(0, w - size + 1))
    record = AugmentationRecord(crop_offset=(y0, x0),
                                noise_seed=pair.augmentation_record.noise_seed,
                                kernel_id=pair.augmentation_record.kernel_id)
    return ImagePair(
        blurry=Tensor(pair.blurry.data[:, y0:y0 + size, x0:x0 + size]),
        sharp=Tensor(pair.sharp.data[:, y0:y0 + size, x0:x0 + size]),
        id=pair.id,
        augmentation_record=record,
    )


def _list_images(directory: Path) -> dict[str, Path]:
    return {p.name: p for p in sorted(directory.iterdir())
            if p.suffix.lower() in IMAGE_SUFFIXES}


def match_pairs(root) -> tuple[list[str], Path, Optional[Path]]:
    """Sorted sample names plus the sharp/blur directories (blur may be absent)."""
    root = Path(root)
    sharp_dir = root / "sharp"
    blur_dir = root / "blur"
    if not sharp_dir.is_dir():
        raise DataError(f"{root}: missing sharp/ directory")
    sharp = _list_images(sharp_dir)
    if not sharp:
        raise DataError(f"{sharp_dir}: no .png/.ppm images found")
    if not blur_dir.is_dir():
        return sorted(sharp), sharp_dir, None
    blur = _list_images(blur_dir)
    if set(blur) != set(sharp):
        raise DataError(
            f"{root}: blur/ and sharp/ filenames do not match\n"
            f"  blur:  {sorted(blur)}\n  sharp: {sorted(sharp)}")
    return sorted(sharp), sharp_dir, blur_dir


def _load_pair(name: str, index: int, sharp_dir: Path, blur_dir: Optional[Path],
               seed: int, epoch: int) -> ImagePair:
    sharp = load_image(sharp_dir / name)
    if blur_dir is not None:
        blurry = load_image(blur_dir / name)
        if blurry.shape != sharp.shape:
            raise DataError(f"{name}: blur {blurry.shape} vs sharp {sharp.shape}")
        kernel_id = None
    else:
        kernel = random_motion_kernel(SYNTH_KERNEL_LENGTH, derive_rng(seed, KERNEL, epoch, index))
        blurry = apply_blur(sharp, kernel)
        kernel_id = f"walk{SYNTH_KERNEL_LENGTH:g}@{seed}/{epoch}/{index}"
    return ImagePair(blurry=blurry, sharp=sharp, id=name,
                     augmentation_record=AugmentationRecord(kernel_id=kernel_id))


def _augment(pair: ImagePair, index: int, cfg, epoch: int) -> ImagePair:
    if cfg.downsample_factor == 2:
        pair = ImagePair(downsample2(pair.blurry), downsample2(pair.sharp),
                         pair.id, pair.augmentation_record)
    pair = random_crop_pair(pair, cfg.crop, derive_rng(cfg.seed, CROP, epoch, index))
    if cfg.noise_variance > 0:
        noisy = add_gaussian_noise(pair.blurry, cfg.noise_variance,
                                   derive_rng(cfg.seed, NOISE, epoch, index))
        pair = ImagePair(noisy, pair.sharp, pair.id,
                         AugmentationRecord(pair.augmentation_record.crop_offset,
                                            noise_seed=index,
                                            kernel_id=pair.augmentation_record.kernel_id))
    return pair


def dataset_iter(root, cfg, epoch: int) -> Iterator[Batch]:
    """Seeded-shuffled stream of augmented fixed-size batches for one epoch.

    Unreadable samples are skipped with a warning; the ragged tail batch is
    dropped. Raises DataError if the directory itself is unusable.
    """
    names, sharp_dir, blur_dir = match_pairs(root)
    order = derive_rng(cfg.seed, SHUFFLE, epoch).permutation(len(names))

    def generate():
        bucket: list[ImagePair] = []
        skipped = 0
        for position in order:
            name = names[position]
            try:
                pair = _load_pair(name, int(position), sharp_dir, blur_dir, cfg.seed, epoch)
                pair = _augment(pair, int(position), cfg, epoch)
            except DataError as exc:
                skipped += 1
                logger.warning("skipping sample %r: %s", name, exc)
                continue
            bucket.append(pair)
            if len(bucket) == cfg.batch:
                yield Batch(
                    blurry=Tensor(np.stack([p.blurry.data for p in bucket])),
                    sharp=Tensor(np.stack([p.sharp.data for p in bucket])),
                    pairs=list(bucket),
                )
                bucket.clear()
        if skipped:
            logger.warning("epoch %d: skipped %d unreadable sample(s)", epoch, skipped)

    return generate()
