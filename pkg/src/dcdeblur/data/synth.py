"""Seeded synthetic sharp images for desk-scale experiments.

Piecewise scenes: a smooth background ramp, a handful of colored
rectangles, plus small near-black dots and strokes. The dark features give
the images the near-zero dark-channel statistics of sharp natural photos,
which blurring visibly inflates.
"""

from __future__ import annotations

import numpy as np

from ..engine import Tensor


def synthetic_sharp_image(rng: np.random.Generator, size: int = 64) -> Tensor:
    """A (3, size, size) image in [0, 1] with sharp edges and dark details."""
    ys, xs = np.mgrid[0:size, 0:size] / max(1, size - 1)
    angle = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(angle) * xs + np.sin(angle) * ys + 1.0) / 2.0
    base = 0.35 + 0.45 * ramp
    img = np.stack([base * rng.uniform(0.7, 1.0) for _ in range(3)])

    for _ in range(rng.integers(4, 9)):
        h = int(rng.integers(size // 8, size // 2))
        w = int(rng.integers(size // 8, size // 2))
        y0 = int(rng.integers(0, size - h))
        x0 = int(rng.integers(0, size - w))
        color = rng.uniform(0.05, 0.95, size=3)
        img[:, y0:y0 + h, x0:x0 + w] = color[:, None, None]

    # small dark dots and short strokes
    for _ in range(rng.integers(10, 25)):
        y = int(rng.integers(1, size - 1))
        x = int(rng.integers(1, size - 1))
        value = rng.uniform(0.0, 0.02)
        if rng.random() < 0.5:
            img[:, y, x] = value
        else:
            length = int(rng.integers(2, 6))
            if rng.random() < 0.5:
                img[:, y, x:min(size, x + length)] = value
            else:
                img[:, y:min(size, y + length), x] = value

    return Tensor(np.clip(img, 0.0, 1.0))
