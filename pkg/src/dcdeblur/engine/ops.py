"""Differentiable operations.

Everything the two networks and the three-term loss need: strided
convolution and its exact adjoint, batch normalization, the pointwise
activations, dropout, channel concatenation, the windowed channel-min
pool behind the dark channel map, and the L1/L2 reductions.

Convolutions run as im2col + matmul. The transposed convolution IS the
adjoint of `conv2d` for a shared weight array, which is what makes the
dot-product adjointness identity hold to rounding error and gives both
backward passes for free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ConfigError, NumericError, ShapeError, StateError
from .tensor import Tensor, record, tracking

# ---------------------------------------------------------------------------
# im2col plumbing


def _im2col(x: np.ndarray, k: int, stride: int, padding: int):
    """(N,C,H,W) -> patch matrix (N, C*k*k, Ho*Wo), plus (Ho, Wo)."""
    n, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    hp, wp = x.shape[2], x.shape[3]
    if hp < k or wp < k:
        raise ShapeError(f"spatial size {h}x{w} with padding {padding} is smaller than kernel {k}")
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    view = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    view = view[:, :, ::stride, ::stride, :, :]
    cols = view.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * k * k, ho * wo)
    return np.ascontiguousarray(cols), ho, wo


def _col2im(cols: np.ndarray, out_shape: tuple, k: int, stride: int, padding: int) -> np.ndarray:
    """Adjoint of `_im2col`: scatter-add patches back into an (N,C,H,W) array."""
    n, c, h, w = out_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    patches = cols.reshape(n, c, k, k, ho, wo)
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += patches[:, :, i, j]
    if padding:
        out = out[:, :, padding:hp - padding, padding:wp - padding]
    return out


def _check_conv_args(stride: int, padding: int) -> None:
    if int(stride) != stride or stride < 1:
        raise ConfigError(f"stride must be a positive integer, got {stride}")
    if int(padding) != padding or padding < 0:
        raise ConfigError(f"padding must be a non-negative integer, got {padding}")


# ---------------------------------------------------------------------------
# convolutions


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor],
           stride: int = 1, padding: int = 0) -> Tensor:
    """Strided 2-D convolution (cross-correlation) over NCHW input.

    weight: (out_ch, in_ch, k, k), square kernel. Output spatial size is
    floor((H + 2*padding - k)/stride) + 1.
    """
    _check_conv_args(stride, padding)
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be NCHW, got shape {x.shape}")
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"conv2d weight must be (out,in,k,k) with square kernel, got {weight.shape}")
    co, ci, k, _ = weight.shape
    if x.shape[1] != ci:
        raise ShapeError(f"conv2d input has {x.shape[1]} channels but weight expects {ci}")
    if bias is not None and bias.shape != (co,):
        raise ShapeError(f"conv2d bias must have shape ({co},), got {bias.shape}")

    n = x.shape[0]
    cols, ho, wo = _im2col(x.data, k, stride, padding)
    wmat = weight.data.reshape(co, ci * k * k)
    out = np.matmul(wmat, cols).reshape(n, co, ho, wo)
    if bias is not None:
        out += bias.data.reshape(1, co, 1, 1)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    result = Tensor(out, requires_grad=tracking(*inputs))
    if result.requires_grad:
        x_shape = x.shape

        def backward(g):
            gmat = g.reshape(n, co, ho * wo)
            gx = gw = gb = None
            if x.requires_grad:
                gx = _col2im(np.matmul(wmat.T, gmat), x_shape, k, stride, padding)
            if weight.requires_grad:
                gw = np.tensordot(gmat, cols, axes=([0, 2], [0, 2])).reshape(weight.shape)
            if bias is not None and bias.requires_grad:
                gb = g.sum(axis=(0, 2, 3))
            return (gx, gw) if bias is None else (gx, gw, gb)

        record("conv2d", inputs, result, backward)
    return result


def transposed_conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor],
                      stride: int = 1, padding: int = 0, output_padding: int = 0) -> Tensor:
    """Transposed (fractionally strided) convolution; the adjoint of conv2d.

    weight: (in_ch, out_ch, k, k) so that the same array drives a conv2d
    mapping out_ch -> in_ch. Output spatial size is
    (H-1)*stride - 2*padding + k + output_padding.
    """
    _check_conv_args(stride, padding)
    if not 0 <= output_padding < stride:
        raise ConfigError(f"output_padding must lie in [0, stride), got {output_padding}")
    if x.ndim != 4:
        raise ShapeError(f"transposed_conv2d input must be NCHW, got shape {x.shape}")
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"transposed_conv2d weight must be (in,out,k,k), got {weight.shape}")
    ci, co, k, _ = weight.shape
    if x.shape[1] != ci:
        raise ShapeError(f"transposed_conv2d input has {x.shape[1]} channels but weight expects {ci}")
    if bias is not None and bias.shape != (co,):
        raise ShapeError(f"transposed_conv2d bias must have shape ({co},), got {bias.shape}")

    n, _, h, w = x.shape
    ho = (h - 1) * stride - 2 * padding + k + output_padding
    wo = (w - 1) * stride - 2 * padding + k + output_padding
    if ho < 1 or wo < 1:
        raise ShapeError(f"transposed_conv2d output size {ho}x{wo} is empty for input {h}x{w}")

    wmat = weight.data.reshape(ci, co * k * k)
    ymat = x.data.reshape(n, ci, h * w)
    out = _col2im(np.matmul(wmat.T, ymat), (n, co, ho, wo), k, stride, padding)
    if bias is not None:
        out += bias.data.reshape(1, co, 1, 1)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    result = Tensor(out, requires_grad=tracking(*inputs))
    if result.requires_grad:

        def backward(g):
            gx = gw = gb = None
            cols_g, gho, gwo = _im2col(g, k, stride, padding)
            assert (gho, gwo) == (h, w)
            if x.requires_grad:
                gx = np.matmul(wmat, cols_g).reshape(n, ci, h, w)
            if weight.requires_grad:
                gw = np.tensordot(ymat, cols_g, axes=([0, 2], [0, 2])).reshape(weight.shape)
            if bias is not None and bias.requires_grad:
                gb = g.sum(axis=(0, 2, 3))
            return (gx, gw) if bias is None else (gx, gw, gb)

        record("transposed_conv2d", inputs, result, backward)
    return result


# ---------------------------------------------------------------------------
# batch normalization


@dataclass
class RunningStats:
    """Exponential-moving-average channel statistics for inference."""
    mean: Optional[np.ndarray] = None
    var: Optional[np.ndarray] = None

    def populated(self) -> bool:
        return self.mean is not None


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, mode: str,
               running_stats: RunningStats, eps: float = 1e-5,
               momentum: float = 0.9) -> Tensor:
    """Per-channel batch normalization over the (batch, H, W) axes.

    Train mode normalizes with the batch statistics and folds them into the
    running averages (new = momentum*old + (1-momentum)*batch; the first
    update seeds the averages directly). Infer mode uses the running stats.
    """
    if mode not in ("train", "infer"):
        raise ConfigError(f"batch_norm mode must be 'train' or 'infer', got {mode!r}")
    if x.ndim != 4:
        raise ShapeError(f"batch_norm input must be NCHW, got shape {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"gamma/beta must have shape ({c},), got {gamma.shape}/{beta.shape}")

    axes = (0, 2, 3)
    if mode == "train":
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if running_stats.populated():
            running_stats.mean = momentum * running_stats.mean + (1.0 - momentum) * mu
            running_stats.var = momentum * running_stats.var + (1.0 - momentum) * var
        else:
            running_stats.mean = mu.copy()
            running_stats.var = var.copy()
    else:
        if not running_stats.populated():
            raise StateError("batch_norm in infer mode requires populated running statistics")
        mu = running_stats.mean
        var = running_stats.var

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
    out = gamma.data.reshape(1, c, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1)

    result = Tensor(out, requires_grad=tracking(x, gamma, beta))
    if result.requires_grad:
        m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]

        def backward(g):
            gx = ggamma = gbeta = None
            if gamma.requires_grad:
                ggamma = (g * xhat).sum(axis=axes)
            if beta.requires_grad:
                gbeta = g.sum(axis=axes)
            if x.requires_grad:
                scale = (gamma.data * inv_std).reshape(1, c, 1, 1)
                if mode == "train":
                    # statistics terms: mean and variance both depend on x
                    g_mean = g.mean(axis=axes).reshape(1, c, 1, 1)
                    gx_hat_mean = (g * xhat).mean(axis=axes).reshape(1, c, 1, 1)
                    gx = scale * (g - g_mean - xhat * gx_hat_mean)
                else:
                    gx = scale * g
            return gx, ggamma, gbeta

        record("batch_norm", (x, gamma, beta), result, backward,
               ctx={"mode": mode, "mean": mu, "var": var})
    return result


# ---------------------------------------------------------------------------
# pointwise activations


def leaky_relu(x: Tensor, alpha: float) -> Tensor:
    """x if x > 0 else alpha*x; the subgradient at 0 is alpha."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"leaky_relu alpha must lie in (0, 1), got {alpha}")
    slope = np.where(x.data > 0, 1.0, alpha)
    result = Tensor(x.data * slope, requires_grad=tracking(x))
    if result.requires_grad:
        record("leaky_relu", (x,), result, lambda g: (g * slope,))
    return result


def sigmoid(x: Tensor) -> Tensor:
    """1/(1+exp(-x)), evaluated without overflow for large |x|."""
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)
    result = Tensor(out, requires_grad=tracking(x))
    if result.requires_grad:
        record("sigmoid", (x,), result, lambda g: (g * out * (1.0 - out),))
    return result


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    result = Tensor(out, requires_grad=tracking(x))
    if result.requires_grad:
        record("tanh", (x,), result, lambda g: (g * (1.0 - out * out),))
    return result


def dropout(x: Tensor, rate: float, mode: str, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Zero each element with probability `rate`, scaling survivors by 1/(1-rate).

    Identity in infer mode and at rate 0. The mask is drawn from `rng` and
    saved for backward, so a fixed generator replays a fixed mask.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if mode not in ("train", "infer"):
        raise ConfigError(f"dropout mode must be 'train' or 'infer', got {mode!r}")
    if mode == "infer" or rate == 0.0:
        return x
    if rng is None:
        raise StateError("dropout in train mode needs an explicit rng")
    keep = (rng.random(x.shape) >= rate)
    scale = 1.0 / (1.0 - rate)
    mask = keep.astype(x.data.dtype) * scale
    result = Tensor(x.data * mask, requires_grad=tracking(x))
    if result.requires_grad:
        record("dropout", (x,), result, lambda g: (g * mask,), ctx={"mask": keep})
    return result


# ---------------------------------------------------------------------------
# windowed channel minimum (dark-channel primitive)

# cap on the temporary (rows, C*w*w) expansion used per chunk
_MINPOOL_CHUNK_BYTES = 32 * 1024 * 1024


def min_pool_channels_window(x: Tensor, window: int):
    """Minimum over channels then over a window x window neighborhood.

    Borders are edge-replicated, so the output is single-channel with the
    input's spatial size. Returns (values, argmin) where argmin[n, y, x]
    holds the winning (channel, dy, dx) offset into the window, ties broken
    by lowest (channel, row, col). Backward routes each output gradient
    entirely to its argmin source pixel.
    """
    if x.ndim != 4 or x.shape[1] < 1:
        raise ShapeError(f"min_pool input must be NCHW with >=1 channel, got shape {x.shape}")
    if int(window) != window or window < 1 or window % 2 == 0:
        raise ConfigError(f"window must be a positive odd integer, got {window}")

    n, c, h, w = x.shape
    r = window // 2
    padded = np.pad(x.data, ((0, 0), (0, 0), (r, r), (r, r)), mode="edge")
    swv = np.lib.stride_tricks.sliding_window_view(padded, (window, window), axis=(2, 3))
    # (N, C, H, W, w, w) view -> flatten (C, w, w) per output pixel, in chunks
    values = np.empty((n, 1, h, w), dtype=x.data.dtype)
    argmin = np.empty((n, h, w, 3), dtype=np.int32)
    span = c * window * window
    rows_per_chunk = max(1, _MINPOOL_CHUNK_BYTES // max(1, n * w * span * x.data.itemsize))
    for y0 in range(0, h, rows_per_chunk):
        y1 = min(h, y0 + rows_per_chunk)
        block = swv[:, :, y0:y1].transpose(0, 2, 3, 1, 4, 5).reshape(n, y1 - y0, w, span)
        flat_idx = block.argmin(axis=-1)
        values[:, 0, y0:y1] = np.take_along_axis(block, flat_idx[..., None], axis=-1)[..., 0]
        ch, rem = np.divmod(flat_idx, window * window)
        dy, dx = np.divmod(rem, window)
        argmin[:, y0:y1, :, 0] = ch
        argmin[:, y0:y1, :, 1] = dy
        argmin[:, y0:y1, :, 2] = dx

    result = Tensor(values, requires_grad=tracking(x))
    if result.requires_grad:
        def backward(g):
            gx = np.zeros((n, c, h, w), dtype=g.dtype)
            ys = np.arange(h).reshape(1, h, 1)
            xs = np.arange(w).reshape(1, 1, w)
            # replicated borders map back to the clipped source pixel
            src_y = np.clip(ys + argmin[..., 1] - r, 0, h - 1)
            src_x = np.clip(xs + argmin[..., 2] - r, 0, w - 1)
            batch = np.arange(n).reshape(n, 1, 1)
            bcast = np.broadcast_to(batch, (n, h, w))
            np.add.at(gx, (bcast, argmin[..., 0], src_y, src_x), g[:, 0])
            return (gx,)

        record("min_pool_channels_window", (x,), result, backward,
               ctx={"argmin": argmin, "window": window})
    return result, argmin


# ---------------------------------------------------------------------------
# shape glue


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack two NCHW tensors along the channel axis."""
    if a.ndim != 4 or b.ndim != 4:
        raise ShapeError(f"concat_channels expects NCHW tensors, got {a.shape} and {b.shape}")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"concat_channels batch/spatial mismatch: {a.shape} vs {b.shape}")
    ca = a.shape[1]
    result = Tensor(np.concatenate([a.data, b.data], axis=1), requires_grad=tracking(a, b))
    if result.requires_grad:
        record("concat_channels", (a, b), result,
               lambda g: (g[:, :ca], g[:, ca:]))
    return result


# ---------------------------------------------------------------------------
# reductions


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op} requires equal shapes, got {a.shape} vs {b.shape}")


def reduce_l1(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute difference; subgradient 0 at exact zeros."""
    _check_same_shape(a, b, "reduce_l1")
    diff = a.data - b.data
    result = Tensor(np.abs(diff).mean(), requires_grad=tracking(a, b))
    if result.requires_grad:
        sign = np.sign(diff) / diff.size

        def backward(g):
            ga = g * sign if a.requires_grad else None
            gb = -g * sign if b.requires_grad else None
            return ga, gb

        record("reduce_l1", (a, b), result, backward)
    return result


def reduce_l2sq(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared difference."""
    _check_same_shape(a, b, "reduce_l2sq")
    diff = a.data - b.data
    result = Tensor((diff * diff).mean(), requires_grad=tracking(a, b))
    if result.requires_grad:
        scale = 2.0 / diff.size

        def backward(g):
            ga = g * scale * diff if a.requires_grad else None
            gb = -g * scale * diff if b.requires_grad else None
            return ga, gb

        record("reduce_l2sq", (a, b), result, backward)
    return result


def mean_all(x: Tensor) -> Tensor:
    result = Tensor(x.data.mean(), requires_grad=tracking(x))
    if result.requires_grad:
        n = x.size
        record("mean_all", (x,), result, lambda g: (np.full(x.shape, g / n, dtype=x.data.dtype),))
    return result


def sum_all(x: Tensor) -> Tensor:
    result = Tensor(x.data.sum(), requires_grad=tracking(x))
    if result.requires_grad:
        record("sum_all", (x,), result, lambda g: (np.full(x.shape, g, dtype=x.data.dtype),))
    return result


# ---------------------------------------------------------------------------
# elementwise arithmetic and scalar glue


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    result = Tensor(a.data + b.data, requires_grad=tracking(a, b))
    if result.requires_grad:
        record("add", (a, b), result, lambda g: (g, g))
    return result


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    result = Tensor(a.data - b.data, requires_grad=tracking(a, b))
    if result.requires_grad:
        record("sub", (a, b), result, lambda g: (g, -g))
    return result


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")
    result = Tensor(a.data * b.data, requires_grad=tracking(a, b))
    if result.requires_grad:
        record("mul", (a, b), result, lambda g: (g * b.data, g * a.data))
    return result


def affine(x: Tensor, scale: float, shift: float) -> Tensor:
    """scale*x + shift with python scalars; covers negation and range remaps."""
    result = Tensor(scale * x.data + shift, requires_grad=tracking(x))
    if result.requires_grad:
        record("affine", (x,), result, lambda g: (g * scale,))
    return result


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0.0):
        raise NumericError("log requires strictly positive input; clamp first")
    result = Tensor(np.log(x.data), requires_grad=tracking(x))
    if result.requires_grad:
        record("log", (x,), result, lambda g: (g / x.data,))
    return result


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes through wherever x is in range."""
    if lo >= hi:
        raise ConfigError(f"clamp needs lo < hi, got [{lo}, {hi}]")
    inside = ((x.data >= lo) & (x.data <= hi)).astype(x.data.dtype)
    result = Tensor(np.clip(x.data, lo, hi), requires_grad=tracking(x))
    if result.requires_grad:
        record("clamp", (x,), result, lambda g: (g * inside,))
    return result


# operator sugar ------------------------------------------------------------

def _scalar(v) -> float:
    if isinstance(v, (int, float, np.floating, np.integer)):
        return float(v)
    raise TypeError(f"expected a python scalar, got {type(v).__name__}")


Tensor.__add__ = lambda self, o: add(self, o) if isinstance(o, Tensor) else affine(self, 1.0, _scalar(o))
Tensor.__radd__ = lambda self, o: affine(self, 1.0, _scalar(o))
Tensor.__sub__ = lambda self, o: sub(self, o) if isinstance(o, Tensor) else affine(self, 1.0, -_scalar(o))
Tensor.__rsub__ = lambda self, o: affine(self, -1.0, _scalar(o))
Tensor.__mul__ = lambda self, o: mul(self, o) if isinstance(o, Tensor) else affine(self, _scalar(o), 0.0)
Tensor.__rmul__ = lambda self, o: affine(self, _scalar(o), 0.0)
Tensor.__neg__ = lambda self: affine(self, -1.0, 0.0)
Tensor.__truediv__ = lambda self, o: affine(self, 1.0 / _scalar(o), 0.0)
