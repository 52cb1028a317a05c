"""Dark channel maps, the differentiable L2 dark-channel loss, and
sparsity diagnostics.

The dark channel of a pixel is the minimum intensity over the color
channels within a window around it. On sharp natural images the map is
mostly near zero; blurring mixes bright neighbors into dark pixels and
inflates it, which is what makes the map a useful training signal. The
counting (L0) form of that observation is not differentiable, so the loss
compares maps of the restored and ground-truth images under a mean squared
difference instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import Tensor, affine, min_pool_channels_window, reduce_l2sq
from .errors import ConfigError, ShapeError

DEFAULT_WINDOW = 15  # minimum-filter extent, the dehazing convention
DEFAULT_SPARSITY_THRESHOLD = 1.0 / 255.0  # one 8-bit quantization level


@dataclass
class DarkChannelMap:
    """Single-channel minimum map plus the provenance of each minimum.

    argmin[n, y, x] = (channel, dy, dx) window offsets of the winning source
    element; gradients route there and nowhere else.
    """
    values: Tensor
    window: int
    argmin: np.ndarray


def dark_channel_map(image: Tensor, window: int = DEFAULT_WINDOW) -> DarkChannelMap:
    """Channel minimum followed by a window x window minimum filter.

    Accepts NCHW with 3 channels (or 1, where the channel step is the
    identity). Borders are edge-replicated so the map keeps the image's
    spatial size. Differentiable when a tape is active.
    """
    if image.ndim != 4:
        raise ShapeError(f"dark_channel_map expects NCHW, got shape {image.shape}")
    if image.shape[1] not in (1, 3):
        raise ShapeError(f"dark_channel_map expects 1 or 3 channels, got {image.shape[1]}")
    values, argmin = min_pool_channels_window(image, window)
    return DarkChannelMap(values=values, window=window, argmin=argmin)


def dark_channel_loss(restored: Tensor, sharp_gt: Tensor, window: int = DEFAULT_WINDOW,
                      input_range: tuple[float, float] = (0.0, 1.0)) -> Tensor:
    """Mean squared difference between the two dark channel maps.

    `input_range` declares the photometric range of the arguments; both are
    affinely remapped to [0, 1] before taking the maps, so the prior sees
    proper intensities whichever activation produced the images. Gradients
    flow to `restored` only.
    """
    if restored.shape != sharp_gt.shape:
        raise ShapeError(f"dark_channel_loss shapes differ: {restored.shape} vs {sharp_gt.shape}")
    lo, hi = input_range
    if not hi > lo:
        raise ConfigError(f"input_range must be increasing, got {input_range}")
    scale = 1.0 / (hi - lo)
    shift = -lo * scale
    restored01 = affine(restored, scale, shift)
    sharp01 = affine(sharp_gt.detach(), scale, shift)
    map_restored = dark_channel_map(restored01, window)
    map_sharp = dark_channel_map(sharp01, window)
    return reduce_l2sq(map_restored.values, map_sharp.values)


def dark_channel_sparsity(image: Tensor, window: int = DEFAULT_WINDOW,
                          threshold: float = DEFAULT_SPARSITY_THRESHOLD) -> float:
    """Fraction of dark-channel pixels above `threshold`.

    A soft stand-in for counting nonzero entries, which is meaningless on
    float images; diagnostic only, not used in training.
    """
    if threshold < 0:
        raise ConfigError(f"threshold must be >= 0, got {threshold}")
    dc = dark_channel_map(image.detach(), window)
    return float((dc.values.data > threshold).mean())
