"""Inference operators and image preprocessing.

Convolutions here are the production paths: conventional convolution lowers
windows to a patch matrix handed to BLAS; depthwise runs a compiled per-tap
accumulation (plain vectorized numpy when no compiler is available). The
deliberately naive loop implementations that cross-check them live in
`ops_direct` and share no code with these.

Image tensors are HWC. Convolution weights are (k, k, in, out), depthwise
weights (k, k, channels); "same" padding zero-fills, "valid" keeps only fully
covered positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover
    _njit = None

__all__ = [
    "BatchNormParams",
    "ConvWeights",
    "DepthwiseWeights",
    "PADDINGS",
    "avg_pool",
    "batchnorm_infer",
    "bilinear_resize",
    "contrast_stretch",
    "conv2d",
    "depthwise_conv2d",
    "dsc_layer",
    "flatten",
    "maxpool2",
    "pointwise_conv2d",
    "relu",
    "sigmoid",
    "softmax",
]

PADDINGS = ("same", "valid")


@dataclass(frozen=True)
class ConvWeights:
    """Conventional convolution weights: kernels (k, k, in, out) plus bias (out,)."""

    kernels: Tensor
    bias: Tensor

    def __post_init__(self) -> None:
        if len(self.kernels.shape) != 4:
            raise ShapeError(f"conv kernels must be rank 4, got {self.kernels.shape}")
        if self.kernels.shape[0] != self.kernels.shape[1]:
            raise ShapeError(f"conv kernels must be square, got {self.kernels.shape}")
        if self.bias.shape != (self.kernels.shape[3],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match {self.kernels.shape[3]} output channels"
            )

    @property
    def kernel_size(self) -> int:
        return self.kernels.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernels.shape[2]

    @property
    def out_channels(self) -> int:
        return self.kernels.shape[3]


@dataclass(frozen=True)
class DepthwiseWeights:
    """Per-channel convolution weights: kernels (k, k, channels) plus bias (channels,)."""

    kernels: Tensor
    bias: Tensor

    def __post_init__(self) -> None:
        if len(self.kernels.shape) != 3:
            raise ShapeError(f"depthwise kernels must be rank 3, got {self.kernels.shape}")
        if self.kernels.shape[0] != self.kernels.shape[1]:
            raise ShapeError(f"depthwise kernels must be square, got {self.kernels.shape}")
        if self.bias.shape != (self.kernels.shape[2],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match {self.kernels.shape[2]} channels"
            )

    @property
    def kernel_size(self) -> int:
        return self.kernels.shape[0]

    @property
    def channels(self) -> int:
        return self.kernels.shape[2]


@dataclass(frozen=True)
class BatchNormParams:
    """Per-channel inference-time normalization parameters."""

    gamma: Tensor
    beta: Tensor
    running_mean: Tensor
    running_var: Tensor
    epsilon: float = 1e-3

    def __post_init__(self) -> None:
        shapes = {
            self.gamma.shape,
            self.beta.shape,
            self.running_mean.shape,
            self.running_var.shape,
        }
        if len(shapes) != 1 or len(self.gamma.shape) != 1:
            raise ShapeError("batch norm parameters must share one rank-1 shape")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if np.any(self.running_var.data < 0):
            raise ValueError("running_var must be non-negative")

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]


def _require_image(t: Tensor, op: str) -> np.ndarray:
    if len(t.shape) != 3:
        raise ShapeError(f"{op} expects a rank-3 HWC tensor, got shape {t.shape}")
    return t.data


def _out_and_pad(size: int, kernel: int, stride: int, padding: str) -> tuple[int, int, int]:
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if padding == "same":
        out = -(-size // stride)
        total = max((out - 1) * stride + kernel - size, 0)
        return out, total // 2, total - total // 2
    if padding == "valid":
        if kernel > size:
            raise ShapeError(f"kernel {kernel} exceeds input extent {size} under valid padding")
        return (size - kernel) // stride + 1, 0, 0
    raise ValueError(f"padding must be one of {PADDINGS}, got {padding!r}")


def _padded(x: np.ndarray, pt: int, pb: int, pl: int, pr: int) -> np.ndarray:
    if pt == pb == pl == pr == 0:
        return x
    return np.pad(x, ((pt, pb), (pl, pr), (0, 0)))


def _window_view(xp: np.ndarray, kernel: int, stride: int, oh: int, ow: int) -> np.ndarray:
    # (oh, ow, k, k, c) view into the padded image; no data is copied here.
    sy, sx, sc = xp.strides
    shape = (oh, ow, kernel, kernel, xp.shape[2])
    strides = (sy * stride, sx * stride, sy, sx, sc)
    return np.lib.stride_tricks.as_strided(xp, shape=shape, strides=strides)


def conv2d(input: Tensor, w: ConvWeights, stride: int = 1, padding: str = "same") -> Tensor:
    """Conventional convolution: every output channel mixes all input channels."""
    x = _require_image(input, "conv2d")
    h, wid, c = x.shape
    if c != w.in_channels:
        raise ShapeError(f"conv2d input has {c} channels, weights expect {w.in_channels}")
    k = w.kernel_size
    oh, pt, pb = _out_and_pad(h, k, stride, padding)
    ow, pl, pr = _out_and_pad(wid, k, stride, padding)
    xp = _padded(x, pt, pb, pl, pr)
    patches = _window_view(xp, k, stride, oh, ow).reshape(oh * ow, k * k * c)
    kmat = w.kernels.data.reshape(k * k * c, w.out_channels)
    out = patches @ kmat + w.bias.data
    return Tensor(out.reshape(oh, ow, w.out_channels))


def depthwise_conv2d(
    input: Tensor, w: DepthwiseWeights, stride: int = 1, padding: str = "same"
) -> Tensor:
    """Spatial convolution applied to each channel independently."""
    x = _require_image(input, "depthwise_conv2d")
    h, wid, c = x.shape
    if c != w.channels:
        raise ShapeError(f"depthwise input has {c} channels, weights expect {w.channels}")
    k = w.kernel_size
    oh, pt, pb = _out_and_pad(h, k, stride, padding)
    ow, pl, pr = _out_and_pad(wid, k, stride, padding)
    xp = _padded(x, pt, pb, pl, pr)
    if _dw_taps is not None:
        return Tensor(_dw_taps(xp, w.kernels.data, w.bias.data, stride, oh, ow))
    return Tensor(_dw_taps_numpy(xp, w.kernels.data, w.bias.data, stride, oh, ow))


def _dw_taps_numpy(
    xp: np.ndarray, kern: np.ndarray, bias: np.ndarray, stride: int, oh: int, ow: int
) -> np.ndarray:
    # one kernel tap at a time over strided slices; avoids materializing the
    # full window tensor
    k = kern.shape[0]
    out = np.broadcast_to(bias, (oh, ow, bias.shape[0])).copy()
    for ky in range(k):
        for kx in range(k):
            rows = xp[ky:ky + (oh - 1) * stride + 1:stride,
                      kx:kx + (ow - 1) * stride + 1:stride, :]
            out += rows * kern[ky, kx, :]
    return out


if _njit is not None:
    @_njit(cache=True)
    def _dw_taps(
        xp: np.ndarray, kern: np.ndarray, bias: np.ndarray, stride: int, oh: int, ow: int
    ) -> np.ndarray:
        k = kern.shape[0]
        c = xp.shape[2]
        out = np.empty((oh, ow, c), dtype=np.float32)
        for oy in range(oh):
            iy = oy * stride
            for ox in range(ow):
                ix = ox * stride
                for ci in range(c):
                    out[oy, ox, ci] = bias[ci]
                for ky in range(k):
                    for kx in range(k):
                        row = xp[iy + ky, ix + kx]
                        tap = kern[ky, kx]
                        for ci in range(c):
                            out[oy, ox, ci] += row[ci] * tap[ci]
        return out
else:  # pragma: no cover
    _dw_taps = None


def pointwise_conv2d(input: Tensor, w: ConvWeights) -> Tensor:
    """1x1 convolution: a per-pixel linear map across channels."""
    if w.kernel_size != 1:
        raise ShapeError(f"pointwise_conv2d requires 1x1 kernels, got {w.kernel_size}")
    x = _require_image(input, "pointwise_conv2d")
    h, wid, c = x.shape
    if c != w.in_channels:
        raise ShapeError(f"pointwise input has {c} channels, weights expect {w.in_channels}")
    out = x.reshape(h * wid, c) @ w.kernels.data.reshape(c, w.out_channels) + w.bias.data
    return Tensor(out.reshape(h, wid, w.out_channels))


def dsc_layer(
    input: Tensor,
    dw: DepthwiseWeights,
    pw: ConvWeights,
    stride: int = 1,
    padding: str = "same",
) -> Tensor:
    """Depthwise-separable convolution: depthwise filtering then pointwise mixing."""
    if pw.in_channels != dw.channels:
        raise ShapeError(
            f"pointwise stage expects {pw.in_channels} channels, depthwise produces {dw.channels}"
        )
    return pointwise_conv2d(depthwise_conv2d(input, dw, stride, padding), pw)


def maxpool2(input: Tensor) -> Tensor:
    """Non-overlapping 2x2 max pooling; an odd trailing row or column is dropped."""
    x = _require_image(input, "maxpool2")
    h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    if h2 == 0 or w2 == 0:
        raise ShapeError(f"input {h}x{w} too small for 2x2 pooling")
    return Tensor(x[: h2 * 2, : w2 * 2].reshape(h2, 2, w2, 2, c).max(axis=(1, 3)))


def avg_pool(input: Tensor, kernel: int, stride: int = 1) -> Tensor:
    """Average pooling over fully covered windows (valid padding)."""
    x = _require_image(input, "avg_pool")
    h, w, c = x.shape
    oh, _, _ = _out_and_pad(h, kernel, stride, "valid")
    ow, _, _ = _out_and_pad(w, kernel, stride, "valid")
    patches = _window_view(x, kernel, stride, oh, ow)
    return Tensor(patches.mean(axis=(2, 3)))


def relu(input: Tensor) -> Tensor:
    return Tensor(np.maximum(input.data, np.float32(0)))


def sigmoid(logits: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-logits.data.astype(np.float64)))
    return Tensor(out.astype(np.float32))


def softmax(logits: Tensor) -> Tensor:
    """Normalized exponentials over a rank-1 vector; output sums to 1."""
    if len(logits.shape) != 1:
        raise ShapeError(f"softmax expects a rank-1 tensor, got shape {logits.shape}")
    z = logits.data.astype(np.float64)
    e = np.exp(z - z.max())
    return Tensor((e / e.sum()).astype(np.float32))


def flatten(input: Tensor) -> Tensor:
    """Row-major flattening to a rank-1 tensor."""
    return Tensor(input.data.reshape(-1))


def batchnorm_infer(input: Tensor, p: BatchNormParams) -> Tensor:
    """y = gamma * (x - mean) / sqrt(var + eps) + beta, per channel."""
    x = _require_image(input, "batchnorm_infer")
    if x.shape[2] != p.channels:
        raise ShapeError(f"batch norm has {p.channels} channels, input has {x.shape[2]}")
    g = p.gamma.data.astype(np.float64)
    scale = g / np.sqrt(p.running_var.data.astype(np.float64) + p.epsilon)
    shift = p.beta.data.astype(np.float64) - p.running_mean.data.astype(np.float64) * scale
    return Tensor((x * scale + shift).astype(np.float32))


def contrast_stretch(image: Tensor) -> Tensor:
    """Stretch each channel of a [0, 255] image to span the full [0, 255] range.

    v -> round((v - min) * 255 / (max - min)) with rounding half away from
    zero; a constant channel maps to all zeros.
    """
    x = _require_image(image, "contrast_stretch").astype(np.float64)
    mn = x.min(axis=(0, 1))
    mx = x.max(axis=(0, 1))
    rng = mx - mn
    safe = rng > 0
    scaled = (x - mn) * 255.0 / np.where(safe, rng, 1.0)
    out = np.floor(scaled + 0.5)  # values are >= 0, so this rounds half away from zero
    out[:, :, ~safe] = 0.0
    return Tensor(out.astype(np.float32))


def bilinear_resize(image: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resampling with half-pixel centers and edge clamping."""
    x = _require_image(image, "bilinear_resize")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"output size must be >= 1, got {out_h}x{out_w}")
    ih, iw, _ = x.shape
    if (out_h, out_w) == (ih, iw):
        return Tensor(x.copy())

    def axis_coords(out_n: int, in_n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        src = (np.arange(out_n, dtype=np.float64) + 0.5) * (in_n / out_n) - 0.5
        base = np.floor(src)
        frac = src - base
        i0 = np.clip(base, 0, in_n - 1).astype(np.int64)
        i1 = np.clip(base + 1, 0, in_n - 1).astype(np.int64)
        return i0, i1, frac

    y0, y1, fy = axis_coords(out_h, ih)
    x0, x1, fx = axis_coords(out_w, iw)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    xd = x.astype(np.float64)
    top = xd[y0][:, x0] * (1 - fx) + xd[y0][:, x1] * fx
    bot = xd[y1][:, x0] * (1 - fx) + xd[y1][:, x1] * fx
    return Tensor((top * (1 - fy) + bot * fy).astype(np.float32))
