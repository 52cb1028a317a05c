"""Synthetic motion-blur kernels and their application.

A kernel is a random-walk camera trajectory of a given arc length,
rasterized with bilinear splatting and normalized to unit mass, in the
spirit of the trajectory-based synthetic blur datasets used to train
end-to-end deblurring networks.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil, cos, sin

import numpy as np

from ..engine import Tensor
from ..errors import ConfigError, ShapeError

SAMPLES_PER_PIXEL = 16  # trajectory sampling density
ANGLE_JITTER = 0.4      # per-sample heading noise, radians


@dataclass
class BlurKernel:
    """Nonnegative taps summing to 1, applied around `anchor`."""
    taps: np.ndarray
    anchor: tuple[int, int]

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.float64)
        if self.taps.ndim != 2:
            raise ShapeError(f"kernel taps must be 2-D, got shape {self.taps.shape}")
        if np.any(self.taps < 0):
            raise ConfigError("kernel taps must be nonnegative")
        total = float(self.taps.sum())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"kernel taps must sum to 1 within 1e-9, got {total}")

    @classmethod
    def identity(cls) -> "BlurKernel":
        return cls(np.ones((1, 1)), (0, 0))


def random_motion_kernel(length: float, rng: np.random.Generator) -> BlurKernel:
    """Random-walk trajectory of arc length `length - 1`, splatted bilinearly.

    length == 1 degenerates to a single-tap identity kernel. The support
    bounding box never exceeds length + 2 on either axis (arc length bounds
    the extent; bilinear splatting adds at most one pixel).
    """
    if length < 1:
        raise ConfigError(f"kernel length must be >= 1, got {length}")
    arc = float(length) - 1.0
    size = int(ceil(length)) + 2
    size += (size + 1) % 2  # odd, so the anchor is a true center
    center = size // 2
    if arc == 0.0:
        taps = np.zeros((size, size))
        taps[center, center] = 1.0
        return BlurKernel(taps, (center, center))

    n = max(2, int(ceil(arc * SAMPLES_PER_PIXEL)))
    step = arc / (n - 1)
    heading = rng.uniform(0.0, 2.0 * np.pi)
    ys = np.empty(n)
    xs = np.empty(n)
    y = x = 0.0
    for i in range(n):
        ys[i], xs[i] = y, x
        heading += rng.normal(0.0, ANGLE_JITTER)
        y += step * sin(heading)
        x += step * cos(heading)

    # center the trajectory's bounding box on the canvas center
    ys += center - (ys.min() + ys.max()) / 2.0
    xs += center - (xs.min() + xs.max()) / 2.0

    taps = np.zeros((size, size))
    iy = np.floor(ys).astype(int)
    ix = np.floor(xs).astype(int)
    fy = ys - iy
    fx = xs - ix
    np.add.at(taps, (iy, ix), (1 - fy) * (1 - fx))
    np.add.at(taps, (iy, ix + 1), (1 - fy) * fx)
    np.add.at(taps, (iy + 1, ix), fy * (1 - fx))
    np.add.at(taps, (iy + 1, ix + 1), fy * fx)
    taps /= taps.sum()
    return BlurKernel(taps, (center, center))


def apply_blur(sharp: Tensor, kernel: BlurKernel) -> Tensor:
    """Per-channel 2-D weighted average around the kernel anchor.

    Edge-replicate padding; output stays inside [0, 1] because the taps form
    a convex combination.
    """
    img = sharp.data if isinstance(sharp, Tensor) else np.asarray(sharp)
    if img.ndim != 3:
        raise ShapeError(f"apply_blur expects (C,H,W), got shape {img.shape}")
    kh, kw = kernel.taps.shape
    ay, ax = kernel.anchor
    c, h, w = img.shape
    if kh > h or kw > w:
        raise ShapeError(f"kernel {kh}x{kw} is larger than the image {h}x{w}")
    padded = np.pad(img, ((0, 0), (ay, kh - 1 - ay), (ax, kw - 1 - ax)), mode="edge")
    out = np.zeros_like(img)
    for i in range(kh):
        for j in range(kw):
            tap = kernel.taps[i, j]
            if tap != 0.0:
                out += tap * padded[:, i:i + h, j:j + w]
    return Tensor(out)


def add_gaussian_noise(image: Tensor, variance: float, rng: np.random.Generator) -> Tensor:
    """i.i.d. zero-mean gaussian noise of the given variance, then clamp to [0,1]."""
    if variance < 0:
        raise ConfigError(f"noise variance must be >= 0, got {variance}")
    img = image.data if isinstance(image, Tensor) else np.asarray(image)
    if variance == 0.0:
        return Tensor(img)
    noisy = img + rng.normal(0.0, np.sqrt(variance), size=img.shape)
    return Tensor(np.clip(noisy, 0.0, 1.0))
