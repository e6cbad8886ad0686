"""Naive reference convolutions: straight loops over every output and tap.

These are the ground-truth twins for the lowered kernels in `ops`. They share
no lowering or padding code with the fast paths; keep them boring. The JIT
only compiles the loops, it does not reorder or fuse them, and there is a
plain interpreted fallback when no JIT is available.

`conv2d_direct_counted` is the same algorithm run interpreted while tallying
one count per kernel multiply; it is how multiply-accumulate totals are
measured rather than computed from a formula.
"""

from __future__ import annotations

import numpy as np

from .ops import ConvWeights, DepthwiseWeights
from .tensor import ShapeError, Tensor

__all__ = [
    "conv2d_direct",
    "conv2d_direct_counted",
    "depthwise_direct",
    "dsc_direct",
]


def _jit(fn):
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - the JIT is present in normal installs
        return fn
    return njit(cache=True)(fn)


@_jit
def _conv_loops(xp, kern, bias, stride, oh, ow):
    kh, kw, cin, cout = kern.shape
    out = np.empty((oh, ow, cout), dtype=np.float32)
    for oy in range(oh):
        for ox in range(ow):
            for oc in range(cout):
                acc = 0.0
                for ky in range(kh):
                    for kx in range(kw):
                        for ic in range(cin):
                            acc += xp[oy * stride + ky, ox * stride + kx, ic] * kern[ky, kx, ic, oc]
                out[oy, ox, oc] = acc + bias[oc]
    return out


def _geometry(size: int, kernel: int, stride: int, padding: str) -> tuple[int, int, int]:
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if padding == "same":
        out = (size + stride - 1) // stride
        total = (out - 1) * stride + kernel - size
        if total < 0:
            total = 0
        return out, total // 2, total - total // 2
    if padding == "valid":
        if kernel > size:
            raise ShapeError(f"kernel {kernel} exceeds input extent {size} under valid padding")
        return (size - kernel) // stride + 1, 0, 0
    raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")


def _pad_zero(x: np.ndarray, pt: int, pb: int, pl: int, pr: int) -> np.ndarray:
    h, w, c = x.shape
    xp = np.zeros((h + pt + pb, w + pl + pr, c), dtype=np.float32)
    xp[pt : pt + h, pl : pl + w] = x
    return xp


def conv2d_direct(input: Tensor, w: ConvWeights, stride: int = 1, padding: str = "same") -> Tensor:
    """Convolution as its definition reads: one multiply per tap, nothing lowered."""
    if len(input.shape) != 3:
        raise ShapeError(f"conv2d_direct expects a rank-3 HWC tensor, got shape {input.shape}")
    h, wid, c = input.shape
    if c != w.in_channels:
        raise ShapeError(f"conv2d_direct input has {c} channels, weights expect {w.in_channels}")
    k = w.kernel_size
    oh, pt, pb = _geometry(h, k, stride, padding)
    ow, pl, pr = _geometry(wid, k, stride, padding)
    xp = _pad_zero(input.data, pt, pb, pl, pr)
    return Tensor(_conv_loops(xp, w.kernels.data, w.bias.data, stride, oh, ow))


def conv2d_direct_counted(
    input: Tensor, w: ConvWeights, stride: int = 1, padding: str = "same"
) -> tuple[Tensor, int]:
    """The same loops run interpreted, returning (output, kernel multiplies)."""
    if len(input.shape) != 3:
        raise ShapeError(f"conv2d_direct expects a rank-3 HWC tensor, got shape {input.shape}")
    h, wid, c = input.shape
    if c != w.in_channels:
        raise ShapeError(f"conv2d_direct input has {c} channels, weights expect {w.in_channels}")
    k = w.kernel_size
    oh, pt, pb = _geometry(h, k, stride, padding)
    ow, pl, pr = _geometry(wid, k, stride, padding)
    xp = _pad_zero(input.data, pt, pb, pl, pr).tolist()
    kern = w.kernels.data.tolist()
    bias = w.bias.data.tolist()
    cout = w.out_channels
    out = np.empty((oh, ow, cout), dtype=np.float32)
    macs = 0
    for oy in range(oh):
        for ox in range(ow):
            for oc in range(cout):
                acc = 0.0
                for ky in range(k):
                    row = xp[oy * stride + ky]
                    krow = kern[ky]
                    for kx in range(k):
                        pix = row[ox * stride + kx]
                        ktap = krow[kx]
                        for ic in range(c):
                            acc += pix[ic] * ktap[ic][oc]
                            macs += 1
                out[oy, ox, oc] = acc + bias[oc]
    return Tensor(out), macs


def depthwise_direct(
    input: Tensor, w: DepthwiseWeights, stride: int = 1, padding: str = "same"
) -> Tensor:
    """Depthwise convolution as per-channel direct convolutions, stacked."""
    if len(input.shape) != 3:
        raise ShapeError(f"depthwise_direct expects a rank-3 HWC tensor, got shape {input.shape}")
    if input.shape[2] != w.channels:
        raise ShapeError(
            f"depthwise_direct input has {input.shape[2]} channels, weights expect {w.channels}"
        )
    k = w.kernel_size
    planes = []
    for ch in range(w.channels):
        single = Tensor(input.data[:, :, ch : ch + 1])
        cw = ConvWeights(
            Tensor(w.kernels.data[:, :, ch].reshape(k, k, 1, 1)),
            Tensor(w.bias.data[ch : ch + 1]),
        )
        planes.append(conv2d_direct(single, cw, stride, padding).data)
    return Tensor(np.concatenate(planes, axis=2))


def dsc_direct(
    input: Tensor,
    dw: DepthwiseWeights,
    pw: ConvWeights,
    stride: int = 1,
    padding: str = "same",
) -> Tensor:
    """Depthwise-separable oracle: per-channel direct pass, then a direct 1x1 pass."""
    return conv2d_direct(depthwise_direct(input, dw, stride, padding), pw, 1, "same")
