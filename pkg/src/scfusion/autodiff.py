"""Minimal reverse-mode differentiation over the conv/tensor primitives.

A GradTape records every traced op in execution order; backward() replays the
records strictly in reverse, accumulating gradients on the Var objects that
flowed through. Ops take the tape as their first argument; passing tape=None
runs the same forward math without recording (inference).

Gradients for the sparse convolution are exactly 0 at masked-out weight
positions: the backward kernel only ever writes the taps the forward pass
executed.
"""

import numpy as np

from . import conv as C
from . import tensor as T


class Var:
    """A value flowing through the tape, with its accumulated gradient."""

    __slots__ = ("value", "grad")

    def __init__(self, value):
        self.value = value
        self.grad = None


class Parameter(Var):
    """A named leaf tensor; `mask` marks a structural zero pattern to keep."""

    __slots__ = ("name", "mask")

    def __init__(self, value, name="", mask=None):
        super().__init__(value)
        self.name = name
        self.mask = mask

    def learnable_count(self):
        if self.mask is None:
            return self.value.size
        k = self.mask.shape[0]
        return self.value.size // (k * k) * int(self.mask.sum())

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def as_var(x):
    return x if isinstance(x, Var) else Var(np.asarray(x))


class GradTape:
    """Ordered op record; single-use, reverse replay."""

    def __init__(self):
        self._nodes = []
        self._spent = False

    def record(self, out, inputs, grad_fn):
        self._nodes.append((out, inputs, grad_fn))

    def backward(self, out, seed):
        """Seed the output gradient and propagate to every recorded input.

        `seed` is the loss gradient w.r.t. `out` (an array matching its
        shape, or a scalar broadcast over it). The tape can be consumed only
        once; re-running would double-count accumulated gradients.
        """
        if self._spent:
            raise RuntimeError("gradient tape already consumed")
        self._spent = True
        g = np.asarray(seed, dtype=out.value.dtype)
        if g.shape != out.value.shape:
            g = np.broadcast_to(g, out.value.shape).copy()
        out.grad = g
        for node_out, inputs, grad_fn in reversed(self._nodes):
            if node_out.grad is None:
                continue
            for v, gi in zip(inputs, grad_fn(node_out.grad)):
                if gi is None:
                    continue
                v.grad = gi if v.grad is None else v.grad + gi


def conv2d_dense(tape, x, w, geom, counter=None):
    C._check_conv_args(x.value, w.value, geom)
    offsets = C.full_offsets(geom.k)
    y, xp = C.direct_conv(x.value, w.value, offsets, geom)
    if counter is not None:
        n, co, ho, wo = y.shape
        counter.add(n * co * x.value.shape[1] * geom.k * geom.k * ho * wo)
    out = Var(y)
    if tape is not None:
        x_val, w_val = x.value, w.value

        def grad_fn(g):
            gx = C.conv_input_grad(g, w_val, offsets, geom, x_val.shape)
            gw = C.conv_weight_grad(g, xp, offsets, geom, w_val.shape)
            return gx, gw

        tape.record(out, (x, w), grad_fn)
    return out


def conv2d_sparse(tape, x, w, mask_grid, geom, counter=None):
    C._check_conv_args(x.value, w.value, geom)
    from .kernels import check_mask

    check_mask(w.value, mask_grid, name="conv2d_sparse weights")
    offsets = C.mask_offsets(mask_grid)
    y, xp = C.direct_conv(x.value, w.value, offsets, geom)
    if counter is not None:
        n, co, ho, wo = y.shape
        counter.add(n * co * x.value.shape[1] * len(offsets) * ho * wo)
    out = Var(y)
    if tape is not None:
        x_val, w_val = x.value, w.value

        def grad_fn(g):
            gx = C.conv_input_grad(g, w_val, offsets, geom, x_val.shape)
            # only the executed taps are written: masked positions stay 0.0
            gw = C.conv_weight_grad(g, xp, offsets, geom, w_val.shape)
            return gx, gw

        tape.record(out, (x, w), grad_fn)
    return out


def conv1x1(tape, x, w, bias, counter=None):
    y = C.conv1x1(x.value, w.value, bias.value, counter)
    out = Var(y)
    if tape is not None:
        x_val, w_val = x.value, w.value

        def grad_fn(g):
            n, co, h, wd = g.shape
            ci = x_val.shape[1]
            g3 = np.ascontiguousarray(g).reshape(n, co, h * wd)
            x3 = np.ascontiguousarray(x_val).reshape(n, ci, h * wd)
            gx = np.matmul(w_val.reshape(co, ci).T, g3).reshape(x_val.shape)
            gw = np.matmul(g3, x3.transpose(0, 2, 1)).sum(axis=0).reshape(w_val.shape)
            gb = g.sum(axis=(0, 2, 3))
            return gx, gw, gb

        tape.record(out, (x, w, bias), grad_fn)
    return out


def relu(tape, x):
    out = Var(T.relu(x.value))
    if tape is not None:
        pos = x.value > 0
        tape.record(out, (x,), lambda g: (g * pos,))
    return out


def add(tape, a, b):
    out = Var(T.add(a.value, b.value))
    if tape is not None:
        tape.record(out, (a, b), lambda g: (g, g))
    return out


def negate(tape, x):
    out = Var(T.negate(x.value))
    if tape is not None:
        tape.record(out, (x,), lambda g: (-g,))
    return out


def concat_channels(tape, parts):
    out = Var(T.concat_channels([p.value for p in parts]))
    if tape is not None:
        sizes = [p.value.shape[1] for p in parts]

        def grad_fn(g):
            return tuple(T.split_channels(g, sizes))

        tape.record(out, tuple(parts), grad_fn)
    return out


def maxpool2x2(tape, x):
    y, idx = C.maxpool2x2_with_indices(x.value)
    out = Var(y)
    if tape is not None:
        shape = x.value.shape
        tape.record(out, (x,), lambda g: (C.maxpool2x2_input_grad(g, idx, shape),))
    return out


def global_avg_pool(tape, x):
    out = Var(C.global_avg_pool(x.value))
    if tape is not None:
        n, c, h, w = x.value.shape
        scale = np.asarray(1.0 / (h * w), dtype=x.value.dtype)

        def grad_fn(g):
            return (np.broadcast_to(g * scale, (n, c, h, w)).copy(),)

        tape.record(out, (x,), grad_fn)
    return out


def fc(tape, x, w, bias, counter=None):
    """Fully connected head: flattens (c, h, w) and emits (n, out, 1, 1)."""
    n = x.value.shape[0]
    feat = x.value[0].size
    if w.value.shape != (w.value.shape[0], feat):
        raise ValueError(
            f"fc: weight shape {w.value.shape} does not match {feat} input features"
        )
    x2 = np.ascontiguousarray(x.value).reshape(n, feat)
    y = x2 @ w.value.T + bias.value
    if counter is not None:
        counter.add(n * w.value.shape[0] * feat)
    out = Var(y.reshape(n, w.value.shape[0], 1, 1))
    if tape is not None:
        w_val = w.value
        x_shape = x.value.shape

        def grad_fn(g):
            g2 = g.reshape(n, w_val.shape[0])
            gx = (g2 @ w_val).reshape(x_shape)
            gw = g2.T @ x2
            gb = g2.sum(axis=0)
            return gx, gw, gb

        tape.record(out, (x, w, bias), grad_fn)
    return out
