"""Finite-difference gradient checking for every differentiable op.

Each check builds a float64 forward pass through the traced ops, seeds the
tape with a fixed random cotangent, and compares the analytic gradient of one
chosen input against central differences of the scalar projection
L(t) = sum(forward(t) * cotangent). Probe points are drawn away from ReLU /
max kinks so the finite differences stay valid.
"""

import numpy as np

from scfusion import autodiff as ad
from scfusion import conv as C
from scfusion.kernels import apply_mask, make_mask_pair
from scfusion.train import softmax_cross_entropy

EPS = 1e-4


def _rel(a, b, floor=1e-6):
    return abs(a - b) / max(abs(a), abs(b), floor)


def _away_from_kinks(rng, shape, margin=0.25):
    x = rng.standard_normal(shape)
    return x + margin * np.sign(x)


def check_grad(build, target_value, probes, seed=0, eps=EPS):
    """Max relative error of the tape gradient vs central differences.

    build(value) must run the full forward in float64 and return the output
    Var plus the Var whose gradient is under test; it is called fresh for
    every probe evaluation.
    """
    rng = np.random.default_rng(seed)
    out0, tvar = build(target_value)
    cot = rng.standard_normal(out0.value.shape)

    tape = ad.GradTape()
    out, tvar = build(target_value, tape)
    tape.backward(out, cot)
    analytic = tvar.grad

    def loss(v):
        o, _ = build(v)
        return float((o.value * cot).sum())

    flat = np.asarray(target_value, dtype=np.float64).reshape(-1)
    idxs = rng.choice(flat.size, size=min(probes, flat.size), replace=False)
    worst = 0.0
    for i in idxs:
        vp = flat.copy()
        vp[i] += eps
        vm = flat.copy()
        vm[i] -= eps
        fd = (loss(vp.reshape(target_value.shape))
              - loss(vm.reshape(target_value.shape))) / (2 * eps)
        worst = max(worst, _rel(fd, float(analytic.reshape(-1)[i])))
    return worst


def _conv_setup(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 3, 6, 6))
    w = rng.standard_normal((4, 3, 3, 3))
    geom = C.ConvGeometry(3, 1, 1)
    return x, w, geom


def all_op_checks(probes=24):
    """(name, max_rel_err) for every differentiable op; errs must be < 1e-4."""
    results = []
    rng = np.random.default_rng(1234)
    pair = make_mask_pair(3)

    x0, w0, geom = _conv_setup(7)

    def conv_dense_w(v, tape=None):
        xv, wv = ad.Var(x0), ad.Var(np.asarray(v))
        return ad.conv2d_dense(tape, xv, wv, geom), wv

    def conv_dense_x(v, tape=None):
        xv, wv = ad.Var(np.asarray(v)), ad.Var(w0)
        return ad.conv2d_dense(tape, xv, wv, geom), xv

    results.append(("conv2d_dense/w", check_grad(conv_dense_w, w0, probes, seed=1)))
    results.append(("conv2d_dense/x", check_grad(conv_dense_x, x0, probes, seed=2)))

    wm = apply_mask(w0, pair.even)

    def conv_sparse_w(v, tape=None):
        # keep the probe value mask-legal
        vv = apply_mask(np.asarray(v), pair.even)
        xv, wv = ad.Var(x0), ad.Var(vv)
        return ad.conv2d_sparse(tape, xv, wv, pair.even, geom), wv

    def conv_sparse_x(v, tape=None):
        xv, wv = ad.Var(np.asarray(v)), ad.Var(wm)
        return ad.conv2d_sparse(tape, xv, wv, pair.even, geom), xv

    results.append(("conv2d_sparse/w", check_grad(conv_sparse_w, wm, probes, seed=3)))
    results.append(("conv2d_sparse/x", check_grad(conv_sparse_x, x0, probes, seed=4)))

    w1 = rng.standard_normal((5, 3, 1, 1))
    b1 = rng.standard_normal(5)

    def conv1x1_w(v, tape=None):
        xv, wv, bv = ad.Var(x0), ad.Var(np.asarray(v)), ad.Var(b1)
        return ad.conv1x1(tape, xv, wv, bv), wv

    def conv1x1_b(v, tape=None):
        xv, wv, bv = ad.Var(x0), ad.Var(w1), ad.Var(np.asarray(v))
        return ad.conv1x1(tape, xv, wv, bv), bv

    def conv1x1_x(v, tape=None):
        xv, wv, bv = ad.Var(np.asarray(v)), ad.Var(w1), ad.Var(b1)
        return ad.conv1x1(tape, xv, wv, bv), xv

    results.append(("conv1x1/w", check_grad(conv1x1_w, w1, probes, seed=5)))
    results.append(("conv1x1/b", check_grad(conv1x1_b, b1, probes, seed=6)))
    results.append(("conv1x1/x", check_grad(conv1x1_x, x0, probes, seed=7)))

    xr = _away_from_kinks(rng, (2, 3, 5, 5))

    def relu_x(v, tape=None):
        xv = ad.Var(np.asarray(v))
        return ad.relu(tape, xv), xv

    results.append(("relu/x", check_grad(relu_x, xr, probes, seed=8)))

    b2 = rng.standard_normal((2, 3, 5, 5))

    def add_a(v, tape=None):
        av, bv = ad.Var(np.asarray(v)), ad.Var(b2)
        return ad.add(tape, av, bv), av

    results.append(("add/a", check_grad(add_a, rng.standard_normal((2, 3, 5, 5)),
                                        probes, seed=9)))

    def negate_x(v, tape=None):
        xv = ad.Var(np.asarray(v))
        return ad.negate(tape, xv), xv

    results.append(("negate/x", check_grad(negate_x, rng.standard_normal((2, 3, 4, 4)),
                                           probes, seed=10)))

    other = rng.standard_normal((2, 2, 4, 4))

    def concat_p(v, tape=None):
        pv = ad.Var(np.asarray(v))
        return ad.concat_channels(tape, [pv, ad.Var(other), pv]), pv

    results.append(("concat_channels/part", check_grad(
        concat_p, rng.standard_normal((2, 2, 4, 4)), probes, seed=11)))

    xm = rng.standard_normal((2, 2, 6, 6))  # continuous draws: no in-window ties

    def maxpool_x(v, tape=None):
        xv = ad.Var(np.asarray(v))
        return ad.maxpool2x2(tape, xv), xv

    results.append(("maxpool2x2/x", check_grad(maxpool_x, xm, probes, seed=12)))

    def gap_x(v, tape=None):
        xv = ad.Var(np.asarray(v))
        return ad.global_avg_pool(tape, xv), xv

    results.append(("global_avg_pool/x", check_grad(
        gap_x, rng.standard_normal((2, 3, 4, 4)), probes, seed=13)))

    xf = rng.standard_normal((3, 4, 2, 2))
    wf = rng.standard_normal((6, 16))
    bf = rng.standard_normal(6)

    def fc_w(v, tape=None):
        xv, wv, bv = ad.Var(xf), ad.Var(np.asarray(v)), ad.Var(bf)
        return ad.fc(tape, xv, wv, bv), wv

    def fc_x(v, tape=None):
        xv, wv, bv = ad.Var(np.asarray(v)), ad.Var(wf), ad.Var(bf)
        return ad.fc(tape, xv, wv, bv), xv

    results.append(("fc/w", check_grad(fc_w, wf, probes, seed=14)))
    results.append(("fc/x", check_grad(fc_x, xf, probes, seed=15)))

    results.append(("softmax_cross_entropy/logits",
                    softmax_ce_check(probes, seed=16)))
    return results


def softmax_ce_check(probes=24, seed=0, eps=EPS):
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal((6, 5, 1, 1))
    labels = rng.integers(0, 5, size=6)
    _, grad = softmax_cross_entropy(logits, labels)
    flat = logits.reshape(-1)
    idxs = rng.choice(flat.size, size=min(probes, flat.size), replace=False)
    worst = 0.0
    for i in idxs:
        lp = flat.copy()
        lp[i] += eps
        lm = flat.copy()
        lm[i] -= eps
        fp, _ = softmax_cross_entropy(lp.reshape(logits.shape), labels)
        fm, _ = softmax_cross_entropy(lm.reshape(logits.shape), labels)
        fd = (fp - fm) / (2 * eps)
        worst = max(worst, _rel(fd, float(grad.reshape(-1)[i])))
    return worst
