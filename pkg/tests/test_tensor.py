import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scfusion import tensor as T


def rand(shape, seed=0, dtype=np.float32):
    return np.random.default_rng(seed).standard_normal(shape).astype(dtype)


def test_zeros_basic():
    z = T.zeros((1, 1, 2, 2))
    assert z.shape == (1, 1, 2, 2)
    assert np.all(z == 0.0)
    assert T.zeros((2, 3, 4, 5)).size == 120
    assert T.zeros((1, 1, 1, 1)).shape == (1, 1, 1, 1)


def test_zeros_rejects_bad_shapes():
    with pytest.raises(ValueError):
        T.zeros((0, 1, 1, 1))
    with pytest.raises(ValueError):
        T.zeros((1, 1, 1))
    with pytest.raises(ValueError):
        T.zeros((2**31, 2**31, 2, 2))  # element count overflow


def test_map_binary():
    a = T.tensor4([[[[1.0, 2.0]]]])
    b = T.tensor4([[[[3.0, 4.0]]]])
    assert T.map_binary(a, b, "add").tolist() == [[[[4.0, 6.0]]]]
    x = rand((2, 3, 4, 4), seed=1)
    assert np.all(T.map_binary(x, x, "sub") == 0.0)
    a = T.tensor4([[[[2.0, 3.0]]]])
    b = T.tensor4([[[[0.0, 5.0]]]])
    assert T.map_binary(a, b, "mul").tolist() == [[[[0.0, 15.0]]]]


def test_map_binary_errors():
    with pytest.raises(ValueError):
        T.map_binary(T.zeros((1, 1, 2, 2)), T.zeros((1, 1, 2, 3)), "add")
    with pytest.raises(ValueError):
        T.map_binary(T.zeros((1, 1, 2, 2)), T.zeros((1, 1, 2, 2)), "div")


def test_negate():
    a = T.tensor4([[[[1.5, -2.0]]]])
    assert T.negate(a).tolist() == [[[[-1.5, 2.0]]]]
    z = T.zeros((1, 2, 2, 2))
    assert np.all(T.negate(z) == 0.0)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_negate_round_trip(seed):
    x = rand((2, 3, 4, 5), seed=seed)
    assert np.max(np.abs(T.negate(T.negate(x)) - x)) == 0.0


def test_relu_definition():
    a = T.tensor4([[[[-1.0, 0.0], [2.0, -3.0]]]])
    assert T.relu(a).tolist() == [[[[0.0, 0.0], [2.0, 0.0]]]]
    allneg = T.tensor4(-np.ones((1, 2, 2, 2)))
    assert np.all(T.relu(allneg) == 0.0)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_relu_properties(seed):
    x = rand((2, 2, 3, 3), seed=seed)
    r = T.relu(x)
    # idempotent, exactly
    assert np.array_equal(T.relu(r), r)
    # relu(x) + relu(-x) == |x|, checked against brute-force abs
    assert np.array_equal(r + T.relu(T.negate(x)), np.abs(x))


def test_concat_shapes_and_identity():
    a, b = T.zeros((1, 2, 3, 3)), T.zeros((1, 2, 3, 3))
    assert T.concat_channels([a, b]).shape == (1, 4, 3, 3)
    x = rand((2, 3, 2, 2), seed=7)
    assert np.array_equal(T.concat_channels([x]), x)


def test_concat_block_order_and_slice_back():
    parts = [rand((1, 3, 2, 2), seed=s) for s in range(4)]
    cat = T.concat_channels(parts)
    assert cat.shape == (1, 12, 2, 2)
    back = T.split_channels(cat, [3, 3, 3, 3])
    for orig, sl in zip(parts, back):
        assert np.array_equal(orig, sl)


def test_concat_errors():
    with pytest.raises(ValueError):
        T.concat_channels([T.zeros((1, 1, 2, 2)), T.zeros((1, 1, 3, 3))])
    with pytest.raises(ValueError):
        T.concat_channels([T.zeros((1, 1, 2, 2)), T.zeros((2, 1, 2, 2))])
    with pytest.raises(ValueError):
        T.concat_channels([])


def test_determinism_bit_identical():
    x = rand((2, 3, 5, 5), seed=3)
    y = rand((2, 3, 5, 5), seed=4)
    for op in (lambda: T.add(x, y), lambda: T.mul(x, y), lambda: T.negate(x),
               lambda: T.relu(x), lambda: T.concat_channels([x, y])):
        assert np.array_equal(op(), op())


def test_check_tensor4():
    with pytest.raises(ValueError):
        T.check_tensor4(np.zeros((2, 2)))
    with pytest.raises(TypeError):
        T.check_tensor4(np.zeros((1, 1, 2, 2), dtype=np.int32))
    with pytest.raises(TypeError):
        T.check_tensor4([[1.0]])
