"""The fusion layer: parallel complementary sparse convolutions joined by
addition and inverse branches, then mixed channel-wise by a 1x1 convolution.

Pipeline (parallel_fusion mode):

    x --+-- sparse conv (even taps) --> e --+
        |                                   |--> [e, o, a, v] concat
        +-- sparse conv (odd taps)  --> o --+         |
                a = e + o   (addition branch)        ReLU
                v = -a      (inverse branch)          |
                                              1x1 conv + bias --> out

Branch order in the concatenation is fixed [even, odd, add, inv]; disabled
branches are removed entirely and the 1x1 weight is sized for what remains.
No activation is applied after the 1x1 - the host network decides.

The number of base kernel pairs n is c_out / alpha (rounded half away from
zero, floor 1), so alpha directly dials the compression: larger alpha, fewer
base kernels, cheaper layer.

The sequential-stacking path (one sparse conv after the other) exists only
for receptive-field comparison: composing the two checkerboard masks can
never cover the full effective field, while the parallel join covers every
tap of the k x k window.
"""

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import autodiff as ad
from . import conv as C
from .kernels import init_kernel_pair, make_mask_pair

MODES = ("parallel_fusion", "sequential_stack")
ABLATIONS = ("A", "B", "C", "D")


def n_base_for(c_out, alpha):
    """c_out / alpha rounded half away from zero, never below 1."""
    alpha = Fraction(alpha)
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    q = Fraction(c_out) / alpha + Fraction(1, 2)
    return max(1, q.numerator // q.denominator)


@dataclass
class SCFusionConfig:
    """Layer hyperparameters; n_base is derived from alpha unless given."""

    c_in: int
    c_out: int
    k: int
    stride: int = 1
    padding: int = 0
    alpha: Fraction = Fraction(4)
    n_base: int = None
    use_addition: bool = True
    use_inverse: bool = True
    sc_kernels: bool = True
    mode: str = "parallel_fusion"

    def __post_init__(self):
        self.alpha = Fraction(self.alpha)
        if self.c_in < 1 or self.c_out < 1:
            raise ValueError(f"need c_in, c_out >= 1, got {self.c_in}, {self.c_out}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.use_inverse and not self.use_addition:
            raise ValueError("use_inverse negates the fused sum, so it requires use_addition")
        if self.n_base is None:
            self.n_base = n_base_for(self.c_out, self.alpha)
        if self.n_base < 1:
            raise ValueError(f"n_base must be >= 1, got {self.n_base}")

    @property
    def branches(self):
        if not self.sc_kernels:
            return 1  # a single dense base conv (ablation A)
        return 2 + int(self.use_addition) + int(self.use_inverse)

    @property
    def fusion_in(self):
        return self.n_base * self.branches

    def geometry(self):
        return C.ConvGeometry(self.k, self.stride, self.padding)


def ablation_config(label, base):
    """Map an ablation label onto kernel/branch flags.

    A: dense regular base kernels, no addition, no inverse.
    B: sparse complementary kernels only.
    C: B plus the addition branch.
    D: the full module (addition and inverse).
    """
    if label not in ABLATIONS:
        raise ValueError(f"unknown ablation {label!r}, expected one of {ABLATIONS}")
    flags = {
        "A": dict(sc_kernels=False, use_addition=False, use_inverse=False),
        "B": dict(sc_kernels=True, use_addition=False, use_inverse=False),
        "C": dict(sc_kernels=True, use_addition=True, use_inverse=False),
        "D": dict(sc_kernels=True, use_addition=True, use_inverse=True),
    }[label]
    return dataclasses.replace(base, **flags)


class SCFusionLayer:
    """Built fusion layer holding its masked kernels and 1x1 mix weights."""

    def __init__(self, config, seed=0, name="scfusion"):
        if config.mode != "parallel_fusion":
            raise ValueError("SCFusionLayer runs parallel_fusion; use forward_sequential "
                             "for the stacking comparison")
        self.config = config
        self.name = name
        cfg = config
        rng = np.random.default_rng((_seed_int(seed), 1))
        if cfg.sc_kernels:
            pair = init_kernel_pair(cfg.n_base, cfg.c_in, cfg.k, seed=(_seed_int(seed), 0))
            self.mask = pair.mask
            self.w_even = ad.Parameter(pair.w_even, f"{name}.w_even", mask=pair.mask.even)
            self.w_odd = ad.Parameter(pair.w_odd, f"{name}.w_odd", mask=pair.mask.odd)
            self.w_dense = None
        else:
            self.mask = None
            self.w_even = self.w_odd = None
            std = np.sqrt(2.0 / (cfg.c_in * cfg.k * cfg.k))
            w = rng.normal(0.0, std, size=(cfg.n_base, cfg.c_in, cfg.k, cfg.k))
            self.w_dense = ad.Parameter(w.astype(np.float32), f"{name}.w_dense")
        std1 = np.sqrt(2.0 / cfg.fusion_in)
        fw = rng.normal(0.0, std1, size=(cfg.c_out, cfg.fusion_in, 1, 1))
        self.fuse_w = ad.Parameter(fw.astype(np.float32), f"{name}.fuse_w")
        self.fuse_bias = ad.Parameter(np.zeros(cfg.c_out, dtype=np.float32), f"{name}.fuse_bias")

    def parameters(self):
        ps = [self.w_dense] if self.w_dense is not None else [self.w_even, self.w_odd]
        return ps + [self.fuse_w, self.fuse_bias]

    def forward(self, x, tape=None, counter=None, return_branches=False):
        """Run the fusion pipeline; optionally expose the pre-ReLU branches.

        Branch maps come back in concat order keyed even/odd/add/inv (or
        dense for the A configuration).
        """
        x = ad.as_var(x)
        cfg = self.config
        geom = cfg.geometry()
        named = []
        if cfg.sc_kernels:
            e = ad.conv2d_sparse(tape, x, self.w_even, self.mask.even, geom, counter)
            o = ad.conv2d_sparse(tape, x, self.w_odd, self.mask.odd, geom, counter)
            named = [("even", e), ("odd", o)]
            if cfg.use_addition:
                a = ad.add(tape, e, o)
                named.append(("add", a))
                if cfg.use_inverse:
                    named.append(("inv", ad.negate(tape, a)))
        else:
            d = ad.conv2d_dense(tape, x, self.w_dense, geom, counter)
            named = [("dense", d)]
        parts = [v for _, v in named]
        z = parts[0] if len(parts) == 1 else ad.concat_channels(tape, parts)
        z = ad.relu(tape, z)
        out = ad.conv1x1(tape, z, self.fuse_w, self.fuse_bias, counter)
        if return_branches:
            return out, {k: v.value for k, v in named}
        return out


def _seed_int(seed):
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    return int(np.random.SeedSequence(seed).generate_state(1)[0])


def forward_sequential(w_first, mask_first, w_second, mask_second, x, geom, counter=None):
    """Stack the two sparse convolutions in sequence (comparison-only path).

    Applies one kernel of the pair, ReLU, then the complementary kernel.
    Channel contract: w_first is (c_mid, c_in, k, k), w_second is
    (c_out, c_mid, k, k).
    """
    h = C.conv2d_sparse(x, w_first, mask_first, geom, counter)
    h = np.maximum(h, 0)
    return C.conv2d_sparse(h, w_second, mask_second, geom, counter)


def effective_support(mode, k):
    """Which taps of the effective receptive field a combination can see.

    parallel_fusion: the branches are summed at the same layer, so the pair
    jointly covers the whole k x k window (the masks are complementary).
    sequential_stack: the composition of the two convolutions has the support
    of the binary convolution of the masks over the (2k-1) x (2k-1) effective
    field, which is never complete: every reachable tap of the composition
    has odd (row+col) parity.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    pair = make_mask_pair(k)
    if mode == "parallel_fusion":
        return np.ones((k, k), dtype=np.uint8)
    eff = np.zeros((2 * k - 1, 2 * k - 1), dtype=np.uint8)
    for dy1, dx1 in C.mask_offsets(pair.even):
        for dy2, dx2 in C.mask_offsets(pair.odd):
            eff[dy1 + dy2, dx1 + dx2] = 1
    return eff
