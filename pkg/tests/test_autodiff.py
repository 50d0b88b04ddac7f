import numpy as np
import pytest

from gradcheck import all_op_checks, check_grad
from scfusion import autodiff as ad
from scfusion import conv as C
from scfusion.kernels import apply_mask, make_mask_pair


def test_tape_backward_single_conv_closed_form():
    # sum-loss through one k=2 conv on a 1x1x2x2 input: dL/dw is the input window
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    w = np.array([[[[0.5, -1.0], [2.0, 0.0]]]])
    xv, wv = ad.Var(x), ad.Var(w)
    tape = ad.GradTape()
    y = ad.conv2d_dense(tape, xv, wv, C.ConvGeometry(2, 1, 0))
    tape.backward(y, np.ones_like(y.value))
    assert np.array_equal(wv.grad, x)
    assert np.array_equal(xv.grad, w)


def test_tape_consumed_twice_raises():
    xv = ad.Var(np.ones((1, 1, 2, 2)))
    tape = ad.GradTape()
    y = ad.relu(tape, xv)
    tape.backward(y, np.ones_like(y.value))
    with pytest.raises(RuntimeError, match="consumed"):
        tape.backward(y, np.ones_like(y.value))


def test_grad_accumulates_over_multiple_uses():
    x = np.full((1, 1, 2, 2), 3.0)
    xv = ad.Var(x)
    tape = ad.GradTape()
    y = ad.add(tape, xv, xv)  # y = 2x
    tape.backward(y, np.ones_like(y.value))
    assert np.all(xv.grad == 2.0)


def test_masked_gradient_exactly_zero():
    pair = make_mask_pair(3)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 2, 5, 5))
    w = apply_mask(rng.standard_normal((3, 2, 3, 3)), pair.odd)
    xv, wv = ad.Var(x), ad.Var(w)
    tape = ad.GradTape()
    y = ad.conv2d_sparse(tape, xv, wv, pair.odd, C.ConvGeometry(3, 1, 1))
    tape.backward(y, rng.standard_normal(y.value.shape))
    assert np.all(wv.grad[..., pair.odd == 0] == 0.0)
    assert np.any(wv.grad[..., pair.odd == 1] != 0.0)


def test_untraced_forward_matches_traced():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 2, 4, 4))
    w = rng.standard_normal((2, 2, 3, 3))
    geom = C.ConvGeometry(3, 1, 1)
    y1 = ad.conv2d_dense(None, ad.Var(x), ad.Var(w), geom)
    y2 = ad.conv2d_dense(ad.GradTape(), ad.Var(x), ad.Var(w), geom)
    assert np.array_equal(y1.value, y2.value)


def test_parameter_learnable_count():
    pair = make_mask_pair(3)
    p = ad.Parameter(np.zeros((4, 3, 3, 3), dtype=np.float32), "w", mask=pair.even)
    assert p.learnable_count() == 4 * 3 * 5
    q = ad.Parameter(np.zeros((4, 3, 3, 3), dtype=np.float32), "w")
    assert q.learnable_count() == 108


def test_fd_spot_checks_core_ops():
    # the full >=20-probe battery runs in the acceptance suite; spot-check here
    rng = np.random.default_rng(5)
    x0 = rng.standard_normal((1, 2, 5, 5))
    w0 = rng.standard_normal((2, 2, 3, 3))
    geom = C.ConvGeometry(3, 1, 1)

    def dense_w(v, tape=None):
        wv = ad.Var(np.asarray(v))
        return ad.conv2d_dense(tape, ad.Var(x0), wv, geom), wv

    assert check_grad(dense_w, w0, probes=8, seed=1) < 1e-4

    def gap_x(v, tape=None):
        xv = ad.Var(np.asarray(v))
        return ad.global_avg_pool(tape, xv), xv

    assert check_grad(gap_x, x0, probes=8, seed=2) < 1e-4


def test_strided_padded_conv_grads():
    rng = np.random.default_rng(9)
    x0 = rng.standard_normal((1, 2, 9, 9))
    w0 = rng.standard_normal((3, 2, 3, 3))
    geom = C.ConvGeometry(3, 2, 1)

    def f_w(v, tape=None):
        wv = ad.Var(np.asarray(v))
        return ad.conv2d_dense(tape, ad.Var(x0), wv, geom), wv

    def f_x(v, tape=None):
        xv = ad.Var(np.asarray(v))
        return ad.conv2d_dense(tape, xv, ad.Var(w0), geom), xv

    assert check_grad(f_w, w0, probes=12, seed=3) < 1e-4
    assert check_grad(f_x, x0, probes=12, seed=4) < 1e-4


def test_all_ops_quick_battery():
    for name, err in all_op_checks(probes=6):
        assert err < 1e-4, f"{name}: max rel err {err}"
