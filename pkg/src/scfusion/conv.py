"""Direct 2-D convolution with zero skipping and exact MAC accounting.

Three forward variants share one inner loop: dense (all k^2 taps), sparse
(only the taps where the mask is nonzero), and pointwise 1x1. The loop walks
kernel offsets in row-major order; for each offset it takes one strided slice
of the padded input and one BLAS multiply against that offset's weight plane.
Skipping the masked-out offsets is what turns the structural sparsity into
wall-clock savings on a CPU - no index tables, no gather/scatter.

Convolution here is cross-correlation (no kernel flip), zero padding, no
bias except on the 1x1 variant. Costs are counted in MACs (one scalar
multiply-accumulate = 1); elementwise add/negate/ReLU are free. Counters
include the batch dimension: they count what was actually executed.

Everything is deterministic: offsets are iterated in a fixed order and each
output element's accumulation order never changes between runs.
"""

from dataclasses import dataclass

import numpy as np

from .kernels import check_mask


@dataclass(frozen=True)
class ConvGeometry:
    """Kernel size, stride and symmetric zero padding."""

    k: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"kernel size must be >= 1, got {self.k}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ValueError(f"padding must be >= 0, got {self.padding}")

    def out_hw(self, h, w):
        ho = (h + 2 * self.padding - self.k) // self.stride + 1
        wo = (w + 2 * self.padding - self.k) // self.stride + 1
        if ho < 1 or wo < 1:
            raise ValueError(
                f"geometry {self} gives empty output {ho}x{wo} for input {h}x{w}"
            )
        return ho, wo


class MacCounter:
    """Running count of scalar multiply-accumulates actually executed."""

    __slots__ = ("macs",)

    def __init__(self):
        self.macs = 0

    def add(self, n):
        if n < 0:
            raise ValueError("MAC increments must be non-negative")
        self.macs += int(n)

    def __repr__(self):
        return f"MacCounter(macs={self.macs})"


def full_offsets(k):
    """All k^2 tap offsets in row-major order."""
    return [(dy, dx) for dy in range(k) for dx in range(k)]


def mask_offsets(mask_grid):
    """Nonzero tap offsets of a binary mask, row-major."""
    return [(int(dy), int(dx)) for dy, dx in np.argwhere(mask_grid != 0)]


def _pad(x, padding):
    if padding == 0:
        return x
    p = padding
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _tap_slice(dy, dx, stride, ho, wo):
    return (
        slice(None),
        slice(None),
        slice(dy, dy + stride * (ho - 1) + 1, stride),
        slice(dx, dx + stride * (wo - 1) + 1, stride),
    )


def _check_conv_args(x, w, geom):
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError(f"conv expects 4-D x and w, got {x.shape} and {w.shape}")
    if w.shape[2] != geom.k or w.shape[3] != geom.k:
        raise ValueError(f"weight spatial dims {w.shape[2:]} do not match k={geom.k}")
    if x.shape[1] != w.shape[1]:
        raise ValueError(
            f"input has {x.shape[1]} channels but weights expect {w.shape[1]}"
        )
    if x.dtype != w.dtype:
        raise TypeError(f"dtype mismatch: x is {x.dtype}, w is {w.dtype}")


def direct_conv(x, w, offsets, geom, xp=None):
    """Offset-iteration convolution over the given taps.

    Returns (out, xp) where xp is the padded input, reusable by the backward
    pass. The per-offset weight planes are copied contiguous once: a strided
    matmul operand falls off the BLAS fast path.
    """
    n, ci, h, wd = x.shape
    co = w.shape[0]
    ho, wo = geom.out_hw(h, wd)
    if xp is None:
        xp = _pad(x, geom.padding)
    planes = np.ascontiguousarray(w.transpose(2, 3, 0, 1))  # (k, k, co, ci)
    out = np.zeros((n, co, ho * wo), dtype=x.dtype)
    for dy, dx in offsets:
        xs = np.ascontiguousarray(xp[_tap_slice(dy, dx, geom.stride, ho, wo)])
        out += np.matmul(planes[dy, dx], xs.reshape(n, ci, ho * wo))
    return out.reshape(n, co, ho, wo), xp


def conv_input_grad(g, w, offsets, geom, x_shape):
    """Gradient of the convolution output w.r.t. its input."""
    n, ci, h, wd = x_shape
    co = w.shape[0]
    ho, wo = g.shape[2], g.shape[3]
    g3 = np.ascontiguousarray(g).reshape(n, co, ho * wo)
    planes = np.ascontiguousarray(w.transpose(2, 3, 1, 0))  # (k, k, ci, co)
    p = geom.padding
    gxp = np.zeros((n, ci, h + 2 * p, wd + 2 * p), dtype=g.dtype)
    for dy, dx in offsets:
        gs = np.matmul(planes[dy, dx], g3).reshape(n, ci, ho, wo)
        gxp[_tap_slice(dy, dx, geom.stride, ho, wo)] += gs
    if p == 0:
        return gxp
    return gxp[:, :, p:p + h, p:p + wd]


def conv_weight_grad(g, xp, offsets, geom, w_shape):
    """Gradient w.r.t. the weights; untouched taps stay exactly 0."""
    n = g.shape[0]
    ho, wo = g.shape[2], g.shape[3]
    ci = w_shape[1]
    g3 = np.ascontiguousarray(g).reshape(n, g.shape[1], ho * wo)
    gw = np.zeros(w_shape, dtype=g.dtype)
    for dy, dx in offsets:
        xs = np.ascontiguousarray(xp[_tap_slice(dy, dx, geom.stride, ho, wo)])
        xs = xs.reshape(n, ci, ho * wo)
        gw[:, :, dy, dx] = np.matmul(g3, xs.transpose(0, 2, 1)).sum(axis=0)
    return gw


def conv2d_dense(x, w, geom, counter=None):
    """Reference dense convolution; counts co*ci*k^2*ho*wo MACs per sample."""
    _check_conv_args(x, w, geom)
    out, _ = direct_conv(x, w, full_offsets(geom.k), geom)
    if counter is not None:
        n, co, ho, wo = out.shape
        counter.add(n * co * x.shape[1] * geom.k * geom.k * ho * wo)
    return out


def conv2d_sparse(x, w, mask_grid, geom, counter=None):
    """Zero-skipping convolution for mask-constrained weights.

    The weights must satisfy the mask (a nonzero at a masked position is a
    hard MaskViolationError - it means state is corrupted, not mis-shaped).
    Numerically equal to conv2d_dense on the same weights up to accumulation
    order; executes and counts only nnz(mask) taps.
    """
    _check_conv_args(x, w, geom)
    if mask_grid.shape != (geom.k, geom.k):
        raise ValueError(f"mask shape {mask_grid.shape} does not match k={geom.k}")
    check_mask(w, mask_grid, name="conv2d_sparse weights")
    offsets = mask_offsets(mask_grid)
    out, _ = direct_conv(x, w, offsets, geom)
    if counter is not None:
        n, co, ho, wo = out.shape
        counter.add(n * co * x.shape[1] * len(offsets) * ho * wo)
    return out


def conv1x1(x, w, bias, counter=None):
    """Pointwise channel mix plus bias; counts co*ci*h*w MACs per sample."""
    if w.shape[2:] != (1, 1):
        raise ValueError(f"conv1x1 expects (co, ci, 1, 1) weights, got {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"input has {x.shape[1]} channels but weights expect {w.shape[1]}")
    co = w.shape[0]
    if bias.shape != (co,):
        raise ValueError(f"bias shape {bias.shape} does not match c_out={co}")
    n, ci, h, wd = x.shape
    w2 = np.ascontiguousarray(w.reshape(co, ci))
    out = np.matmul(w2, np.ascontiguousarray(x).reshape(n, ci, h * wd))
    out += bias[:, None].astype(x.dtype)
    if counter is not None:
        counter.add(n * co * ci * h * wd)
    return out.reshape(n, co, h, wd)


def maxpool2x2(x):
    """2x2/stride-2 max pooling; requires even spatial dims."""
    out, _ = maxpool2x2_with_indices(x)
    return out


def maxpool2x2_with_indices(x):
    """Max pooling plus the in-window argmax, for gradient routing.

    Ties break to the first maximum in row-major window order, so the
    backward routing is deterministic.
    """
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2x2 needs even spatial dims, got {h}x{w}")
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = np.ascontiguousarray(win).reshape(n, c, h // 2, w // 2, 4)
    idx = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2x2_input_grad(g, idx, x_shape):
    n, c, h, w = x_shape
    scat = np.zeros((n, c, h // 2, w // 2, 4), dtype=g.dtype)
    np.put_along_axis(scat, idx[..., None], g[..., None], axis=-1)
    scat = scat.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(scat).reshape(n, c, h, w)


def global_avg_pool(x):
    """Per-channel spatial mean, shape (n, c, 1, 1)."""
    return x.mean(axis=(2, 3), keepdims=True)
