"""Deterministic complementary sparse kernel masks and masked weight tensors.

The two masks of a pair split the k x k grid by checkerboard parity:
positions with (row + col) even belong to the even mask, the rest to the odd
mask. The center (k//2, k//2) of an odd-sized kernel always has even parity,
so the center weight - typically the largest one - stays in the even kernel.
The pattern is a pure function of k: no index tables are ever stored, and a
weight tensor can be validated against its mask from k alone.

For odd k the even mask has ceil(k^2/2) nonzero positions and the odd mask
floor(k^2/2); their union is the full grid and their intersection is empty.
"""

import math
from dataclasses import dataclass

import numpy as np


class MaskViolationError(RuntimeError):
    """A weight tensor carries a nonzero value at a masked-out position.

    This signals corrupted state (a bad archive, or an optimizer that leaked
    updates into the zero pattern) rather than a recoverable input error.
    """


@dataclass(frozen=True)
class SCMaskPair:
    """Complementary binary k x k masks; even holds the center."""

    k: int
    even: np.ndarray
    odd: np.ndarray

    def nnz(self, which):
        return int(self.even.sum()) if which == "even" else int(self.odd.sum())


@dataclass
class SCKernelPair:
    """Paired masked weight tensors, each shaped (n_base, c_in, k, k).

    Weights at masked-out positions are exactly 0 at all times; the training
    loop re-applies the masks after every optimizer step.
    """

    w_even: np.ndarray
    w_odd: np.ndarray
    mask: SCMaskPair


def make_mask_pair(k):
    """Checkerboard mask pair for odd kernel size k >= 3."""
    if not isinstance(k, (int, np.integer)):
        raise TypeError(f"kernel size must be an integer, got {type(k).__name__}")
    if k < 3:
        raise ValueError(f"kernel size must be >= 3, got {k}")
    if k % 2 == 0:
        raise ValueError(f"kernel size must be odd (the center rule needs a center), got {k}")
    rows = np.arange(k)[:, None]
    cols = np.arange(k)[None, :]
    even = ((rows + cols) % 2 == 0).astype(np.uint8)
    odd = np.uint8(1) - even
    even.setflags(write=False)
    odd.setflags(write=False)
    return SCMaskPair(k=int(k), even=even, odd=odd)


def even_nnz(k):
    return math.ceil(k * k / 2)


def odd_nnz(k):
    return math.floor(k * k / 2)


def apply_mask(weights, mask_grid):
    """Zero out weight positions where the mask is 0; idempotent."""
    k = mask_grid.shape[0]
    if weights.shape[-2:] != (k, k):
        raise ValueError(
            f"apply_mask: weight spatial dims {weights.shape[-2:]} do not match mask {mask_grid.shape}"
        )
    out = weights.copy()
    out[..., mask_grid == 0] = 0.0
    return out


def check_mask(weights, mask_grid, name="weights"):
    """Raise MaskViolationError if any masked-out position is nonzero."""
    bad = weights[..., mask_grid == 0]
    if bad.size and np.any(bad != 0):
        # locate the first offending position for the diagnostic
        viol = (weights != 0) & (mask_grid == 0)
        pos = tuple(int(i) for i in np.argwhere(viol)[0])
        raise MaskViolationError(
            f"{name}: nonzero value {weights[pos]!r} at masked position {pos}"
        )


def init_kernel_pair(n_base, c_in, k, seed):
    """Draw a masked kernel pair, He-style over the nonzero fan-in.

    Nonzero positions are N(0, 2 / (c_in * nnz)) where nnz is that mask's
    per-kernel nonzero count; masked positions are exactly 0. Deterministic
    for a fixed seed.
    """
    if n_base < 1 or c_in < 1:
        raise ValueError(f"init_kernel_pair: need n_base, c_in >= 1, got {n_base}, {c_in}")
    mask = make_mask_pair(k)
    rng = np.random.default_rng(seed)
    shape = (n_base, c_in, k, k)

    def draw(grid, nnz):
        std = math.sqrt(2.0 / (c_in * nnz))
        w = rng.normal(0.0, std, size=shape).astype(np.float32)
        w[..., grid == 0] = 0.0
        return w

    w_even = draw(mask.even, even_nnz(k))
    w_odd = draw(mask.odd, odd_nnz(k))
    return SCKernelPair(w_even=w_even, w_odd=w_odd, mask=mask)
