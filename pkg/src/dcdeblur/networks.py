"""Encoder-decoder generator and conditional discriminator.

Both nets are ladders of stride-s kernel-k blocks. Except for each net's
first layer, every block is convolution + batch normalization + leaky
ReLU. The generator mirrors its encoder with transposed convolutions,
re-injecting each encoder activation into the decoder at the matching
resolution (skip concatenation), applies dropout to the early decoder
blocks, and finishes with a stride-1 transposed convolution to 3 channels
plus tanh. The discriminator sees the candidate image stacked on the
conditioning blurry image (6 channels) and collapses its final grid to one
scalar per batch item with a full-grid convolution followed by a sigmoid.

Convolutions that feed a batch-norm carry no bias parameter: the
normalization subtracts the per-channel mean, so such a bias would be
exactly gradient-free dead weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import (
    Parameter,
    RunningStats,
    Tensor,
    batch_norm,
    concat_channels,
    conv2d,
    dropout,
    leaky_relu,
    sigmoid,
    tanh,
    transposed_conv2d,
)
from .errors import ConfigError, ShapeError

IMG_CHANNELS = 3
WEIGHT_STD = 0.02  # init: zero-mean gaussian


@dataclass
class NetworkSpec:
    """Declarative layer ladder shared by generator and discriminator.

    `decoder_filters` defaults to the mirrored encoder ladder and
    `dropout_blocks` to the first half of the decoder. `image_size` fixes
    the discriminator's final grid (the generator is size-agnostic as long
    as the input is divisible by stride**depth).
    """
    encoder_filters: tuple = (64, 128, 256, 512)
    decoder_filters: tuple = None
    kernel: int = 5
    stride: int = 2
    leak: float = 0.2
    dropout_rate: float = 0.5
    dropout_blocks: tuple = None
    normalize_first_layer: bool = False
    image_size: int = 64

    def __post_init__(self):
        self.encoder_filters = tuple(int(f) for f in self.encoder_filters)
        if self.decoder_filters is None:
            self.decoder_filters = tuple(reversed(self.encoder_filters))
        else:
            self.decoder_filters = tuple(int(f) for f in self.decoder_filters)
        if self.dropout_blocks is None:
            self.dropout_blocks = tuple(range(len(self.decoder_filters) // 2))
        else:
            self.dropout_blocks = tuple(int(b) for b in self.dropout_blocks)

    @property
    def depth(self) -> int:
        return len(self.encoder_filters)

    def violations(self) -> list[str]:
        """Every broken invariant, not just the first."""
        problems = []
        if not self.encoder_filters or any(f < 1 for f in self.encoder_filters):
            problems.append(f"encoder_filters must be positive ints, got {self.encoder_filters}")
        if len(self.decoder_filters) != len(self.encoder_filters):
            problems.append(
                f"decoder_filters length {len(self.decoder_filters)} must mirror "
                f"encoder_filters length {len(self.encoder_filters)}")
        if any(f < 1 for f in self.decoder_filters):
            problems.append(f"decoder_filters must be positive ints, got {self.decoder_filters}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            problems.append(f"kernel must be odd and positive, got {self.kernel}")
        if self.stride < 1:
            problems.append(f"stride must be >= 1, got {self.stride}")
        if not 0.0 < self.leak < 1.0:
            problems.append(f"leak must lie in (0, 1), got {self.leak}")
        if not 0.0 <= self.dropout_rate < 1.0:
            problems.append(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if any(b < 0 or b >= len(self.decoder_filters) for b in self.dropout_blocks):
            problems.append(f"dropout_blocks {self.dropout_blocks} out of range for "
                            f"{len(self.decoder_filters)} decoder blocks")
        if self.image_size < 1:
            problems.append(f"image_size must be positive, got {self.image_size}")
        elif self.stride > 1 and self.image_size // (self.stride ** self.depth) < 1:
            problems.append(
                f"image_size {self.image_size} collapses below 1 px after {self.depth} "
                f"stride-{self.stride} blocks; reduce depth or enlarge the input")
        return problems

    def validate(self) -> None:
        problems = self.violations()
        if problems:
            raise ConfigError("; ".join(problems))


class Network:
    """Parameter collection + running stats + train/infer mode."""

    def __init__(self, spec: NetworkSpec):
        spec.validate()
        self.spec = spec
        self.mode = "train"
        self.params: dict[str, Parameter] = {}
        self.stats: dict[str, RunningStats] = {}

    def set_mode(self, mode: str) -> None:
        if mode not in ("train", "infer"):
            raise ConfigError(f"mode must be 'train' or 'infer', got {mode!r}")
        self.mode = mode

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def parameter_count(self) -> int:
        return sum(p.value.size for p in self.params.values())

    def _add_param(self, name: str, array: np.ndarray) -> Parameter:
        assert name not in self.params, f"duplicate parameter {name}"
        p = Parameter(name, array)
        self.params[name] = p
        return p

    def _bias(self, name: str) -> Tensor | None:
        p = self.params.get(f"{name}.bias")
        return None if p is None else p.value

    def _add_bn(self, name: str, channels: int) -> None:
        self._add_param(f"{name}.gamma", np.ones(channels))
        self._add_param(f"{name}.beta", np.zeros(channels))
        self.stats[name] = RunningStats()

    def _bn(self, name: str, x: Tensor) -> Tensor:
        return batch_norm(x, self.params[f"{name}.gamma"].value,
                          self.params[f"{name}.beta"].value,
                          self.mode, self.stats[name])


class Generator(Network):
    """Restores a sharp image from a blurry one; in/out in [-1, 1]."""

    def __init__(self, spec: NetworkSpec, rng: np.random.Generator):
        super().__init__(spec)
        k = spec.kernel
        prev = IMG_CHANNELS
        for i, f in enumerate(spec.encoder_filters):
            normalized = i > 0 or spec.normalize_first_layer
            self._add_param(f"enc{i}.weight", rng.normal(0.0, WEIGHT_STD, size=(f, prev, k, k)))
            if normalized:
                self._add_bn(f"enc{i}.bn", f)
            else:
                self._add_param(f"enc{i}.bias", np.zeros(f))
            prev = f
        for j, g in enumerate(spec.decoder_filters):
            # transposed-conv weight layout is (in, out, k, k)
            self._add_param(f"dec{j}.weight", rng.normal(0.0, WEIGHT_STD, size=(prev, g, k, k)))
            self._add_bn(f"dec{j}.bn", g)
            prev = g
            if j < spec.depth - 1:
                prev += spec.encoder_filters[spec.depth - 2 - j]
        self._add_param("head.weight", rng.normal(0.0, WEIGHT_STD, size=(prev, IMG_CHANNELS, k, k)))
        self._add_param("head.bias", np.zeros(IMG_CHANNELS))

    def forward(self, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        spec = self.spec
        k, s = spec.kernel, spec.stride
        if x.ndim != 4 or x.shape[1] != IMG_CHANNELS:
            raise ShapeError(f"generator input must be (N,{IMG_CHANNELS},H,W), got {x.shape}")

        sizes = [x.shape[2]]
        skips = []
        h = x
        for i in range(spec.depth):
            side = h.shape[2]
            if s > 1 and (side % s != 0 or h.shape[3] % s != 0):
                raise ConfigError(
                    f"generator encoder block {i}: spatial size {side}x{h.shape[3]} "
                    f"not divisible by stride {s}")
            h = conv2d(h, self.params[f"enc{i}.weight"].value, self._bias(f"enc{i}"),
                       stride=s, padding=k // 2)
            if f"enc{i}.bn" in self.stats:
                h = self._bn(f"enc{i}.bn", h)
            h = leaky_relu(h, spec.leak)
            skips.append(h)
            sizes.append(h.shape[2])

        for j in range(spec.depth):
            target = sizes[spec.depth - 1 - j]
            current = h.shape[2]
            out_pad = target - ((current - 1) * s - 2 * (k // 2) + k)
            h = transposed_conv2d(h, self.params[f"dec{j}.weight"].value, None,
                                  stride=s, padding=k // 2, output_padding=out_pad)
            h = self._bn(f"dec{j}.bn", h)
            h = leaky_relu(h, spec.leak)
            if j in spec.dropout_blocks:
                h = dropout(h, spec.dropout_rate, self.mode, rng)
            if j < spec.depth - 1:
                h = concat_channels(h, skips[spec.depth - 2 - j])

        h = transposed_conv2d(h, self.params["head.weight"].value,
                              self.params["head.bias"].value,
                              stride=1, padding=k // 2)
        return tanh(h)


class Discriminator(Network):
    """Scores (candidate, blurry) pairs; one sigmoid scalar per item."""

    def __init__(self, spec: NetworkSpec, rng: np.random.Generator):
        super().__init__(spec)
        k = spec.kernel
        prev = 2 * IMG_CHANNELS
        for i, f in enumerate(spec.encoder_filters):
            normalized = i > 0 or spec.normalize_first_layer
            self._add_param(f"blk{i}.weight", rng.normal(0.0, WEIGHT_STD, size=(f, prev, k, k)))
            if normalized:
                self._add_bn(f"blk{i}.bn", f)
            else:
                self._add_param(f"blk{i}.bias", np.zeros(f))
            prev = f
        grid = spec.image_size // (spec.stride ** spec.depth)
        self.grid = grid
        self._add_param("head.weight", rng.normal(0.0, WEIGHT_STD, size=(1, prev, grid, grid)))
        self._add_param("head.bias", np.zeros(1))

    def forward(self, candidate: Tensor, condition: Tensor) -> Tensor:
        spec = self.spec
        k, s = spec.kernel, spec.stride
        if candidate.shape != condition.shape:
            raise ShapeError(
                f"discriminator inputs must match, got {candidate.shape} vs {condition.shape}")
        if candidate.shape[2] != spec.image_size or candidate.shape[3] != spec.image_size:
            raise ShapeError(
                f"discriminator head expects {spec.image_size}x{spec.image_size} input, "
                f"got {candidate.shape[2]}x{candidate.shape[3]}")
        h = concat_channels(candidate, condition)
        for i in range(spec.depth):
            if s > 1 and (h.shape[2] % s != 0 or h.shape[3] % s != 0):
                raise ConfigError(
                    f"discriminator block {i}: spatial size {h.shape[2]}x{h.shape[3]} "
                    f"not divisible by stride {s}")
            h = conv2d(h, self.params[f"blk{i}.weight"].value, self._bias(f"blk{i}"),
                       stride=s, padding=k // 2)
            if f"blk{i}.bn" in self.stats:
                h = self._bn(f"blk{i}.bn", h)
            h = leaky_relu(h, spec.leak)
        h = conv2d(h, self.params["head.weight"].value, self.params["head.bias"].value,
                   stride=1, padding=0)
        return sigmoid(h)


def build_generator(spec: NetworkSpec, rng: np.random.Generator) -> Generator:
    return Generator(spec, rng)


def build_discriminator(spec: NetworkSpec, rng: np.random.Generator) -> Discriminator:
    return Discriminator(spec, rng)


def forward(net: Network, *inputs: Tensor, rng: np.random.Generator | None = None) -> Tensor:
    """Run a network's block sequence on the active tape."""
    if isinstance(net, Generator):
        return net.forward(*inputs, rng=rng)
    return net.forward(*inputs)


def restore_image(gen: Generator, image: Tensor) -> Tensor:
    """Deblur one (3, H, W) image in [0, 1] with the generator in infer mode.

    Arbitrary sizes are handled by reflect-padding up to the next multiple of
    stride**depth and cropping the output back; training inputs are
    pre-validated and never take this path.
    """
    arr = image.data if isinstance(image, Tensor) else np.asarray(image)
    if arr.ndim != 3 or arr.shape[0] != IMG_CHANNELS:
        raise ShapeError(f"restore_image expects (3,H,W), got {arr.shape}")
    _, h, w = arr.shape
    unit = gen.spec.stride ** gen.spec.depth
    ph = (unit - h % unit) % unit
    pw = (unit - w % unit) % unit
    if ph or pw:
        if h <= ph or w <= pw:
            raise ShapeError(f"image {h}x{w} too small for depth-{gen.spec.depth} reflect padding")
        arr = np.pad(arr, ((0, 0), (0, ph), (0, pw)), mode="reflect")
    previous_mode = gen.mode
    gen.set_mode("infer")
    try:
        out = gen.forward(Tensor(arr[None] * 2.0 - 1.0))
    finally:
        gen.set_mode(previous_mode)
    restored = (out.data[0] + 1.0) / 2.0
    return Tensor(np.clip(restored[:, :h, :w], 0.0, 1.0))
