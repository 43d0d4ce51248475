import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biplanar.tensor import (ConvSpec, conv2d, conv3d, fully_connected, instance_norm, relu, seeded_init,
                             sigmoid, transposed_conv)
from conftest import direct_conv


def test_conv2d_all_ones():
    y = conv2d(np.ones((1, 3, 3)), np.ones((1, 1, 2, 2)), np.zeros(1), ConvSpec(2, 1, 0))
    assert y.shape == (1, 2, 2)
    assert np.all(y == 4)


def test_conv2d_zero_kernel(rng):
    y = conv2d(rng.normal(size=(3, 7, 5)), np.zeros((2, 3, 3, 3)), np.zeros(2), ConvSpec(3, 1, 1))
    assert np.all(y == 0)


def test_conv2d_k4s2p1_halves():
    y = conv2d(np.ones((1, 4, 4)), np.ones((1, 1, 4, 4)), None, ConvSpec(4, 2, 1))
    assert y.shape == (1, 2, 2)


def test_conv3d_128_to_64():
    y = conv3d(np.zeros((1, 128, 128, 128), dtype=np.float32), np.zeros((1, 1, 4, 4, 4), dtype=np.float32),
               None, ConvSpec(4, 2, 1))
    assert y.shape == (1, 64, 64, 64)


def test_conv3d_identity_kernel(rng):
    x = rng.normal(size=(1, 5, 4, 6))
    y = conv3d(x, np.ones((1, 1, 1, 1, 1)), np.zeros(1), ConvSpec(1, 1, 0))
    np.testing.assert_array_equal(y, x)


def test_conv3d_matches_direct_oracle(rng):
    x = rng.normal(size=(2, 2, 2, 2))
    k = rng.normal(size=(3, 2, 2, 2, 2))
    b = rng.normal(size=3)
    y = conv3d(x, k, b, ConvSpec(2, 1, 1))
    assert np.max(np.abs(y - direct_conv(x, k, b, 1, 1))) < 1e-12


@pytest.mark.parametrize("k,s,p", list(itertools.product(range(1, 6), (1, 2), (0, 1, 2))))
def test_conv2d_sweep_against_oracle(rng, k, s, p):
    x = rng.normal(size=(2, 6, 7))
    w = rng.normal(size=(2, 2, k, k))
    b = rng.normal(size=2)
    y = conv2d(x, w, b, ConvSpec(k, s, p))
    expected = direct_conv(x, w, b, s, p)
    assert y.shape == expected.shape
    assert y.shape[1:] == tuple((n + 2 * p - k) // s + 1 for n in x.shape[1:])
    assert np.max(np.abs(y - expected)) < 1e-12


@pytest.mark.parametrize("k,s,p", [(1, 1, 0), (3, 1, 1), (4, 2, 1), (5, 2, 2), (2, 2, 0)])
def test_conv3d_sweep_against_oracle(rng, k, s, p):
    x = rng.normal(size=(2, 5, 4, 6))
    w = rng.normal(size=(2, 2, k, k, k))
    y = conv3d(x, w, None, ConvSpec(k, s, p))
    assert np.max(np.abs(y - direct_conv(x, w, None, s, p))) < 1e-12


def test_conv_anisotropic_spec(rng):
    x = rng.normal(size=(1, 6, 5))
    w = rng.normal(size=(1, 1, 3, 2))
    y = conv2d(x, w, None, ConvSpec((3, 2), (2, 1), (1, 0)))
    assert np.max(np.abs(y - direct_conv(x, w, None, (2, 1), (1, 0)))) < 1e-12


def test_conv_shape_errors():
    with pytest.raises(ValueError, match="channel axis"):
        conv2d(np.ones((2, 4, 4)), np.ones((1, 3, 3, 3)), None, ConvSpec(3, 1, 1))
    with pytest.raises(ValueError, match="spatial axis 1"):
        conv2d(np.ones((1, 4, 4)), np.ones((1, 1, 3, 2)), None, ConvSpec(3, 1, 1))
    with pytest.raises(ValueError, match="spatial axis 0"):
        conv2d(np.ones((1, 2, 8)), np.ones((1, 1, 5, 5)), None, ConvSpec(5, 1, 0))


def test_transposed_doubles_extent():
    y = transposed_conv(np.ones((2, 16, 16, 16)), np.ones((2, 3, 4, 4, 4)), np.zeros(3), ConvSpec(4, 2, 1), dims=3)
    assert y.shape == (3, 32, 32, 32)


def test_transposed_zero_input_gives_bias():
    y = transposed_conv(np.zeros((1, 3, 3)), np.ones((1, 2, 4, 4)), np.array([0.5, -2.0]), ConvSpec(4, 2, 1), dims=2)
    assert np.all(y[0] == 0.5) and np.all(y[1] == -2.0)


@pytest.mark.parametrize("dims", [2, 3])
@pytest.mark.parametrize("k,s,p", [(4, 2, 1), (3, 1, 1), (3, 2, 1), (2, 2, 0), (5, 1, 2), (1, 1, 0)])
def test_transposed_is_adjoint_of_conv(rng, dims, k, s, p):
    n_in = 8
    x = rng.normal(size=(3,) + (n_in,) * dims)
    w = rng.normal(size=(2, 3) + (k,) * dims)
    spec = ConvSpec(k, s, p)
    cx = (conv2d if dims == 2 else conv3d)(x, w, None, spec)
    y = rng.normal(size=cx.shape)
    # output_padding restores the extent the strided conv dropped
    extra = n_in - spec.transposed_out_extent(cx.shape[1])
    ty = transposed_conv(y, w, None, spec, dims=dims, output_padding=extra)
    assert ty.shape == x.shape
    lhs, rhs = np.sum(cx * y), np.sum(x * ty)
    assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


@pytest.mark.parametrize("k,s,p", list(itertools.product(range(1, 6), (1, 2), (0, 1, 2))))
def test_transposed_shape_law(k, s, p):
    n = 5
    expected = (n - 1) * s - 2 * p + k
    if expected < 1:
        with pytest.raises(ValueError):
            transposed_conv(np.ones((1, n, n)), np.ones((1, 1, k, k)), None, ConvSpec(k, s, p), dims=2)
        return
    y = transposed_conv(np.ones((1, n, n)), np.ones((1, 1, k, k)), None, ConvSpec(k, s, p), dims=2)
    assert y.shape[1:] == (expected, expected)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2**32 - 1))
def test_conv_linearity(a, b, seed):
    r = np.random.default_rng(seed)
    x, y = r.normal(size=(2, 2, 5, 5, 5))
    w = r.normal(size=(3, 2, 3, 3, 3))
    spec = ConvSpec(3, 2, 1)
    lhs = conv3d(a * x + b * y, w, None, spec)
    rhs = a * conv3d(x, w, None, spec) + b * conv3d(y, w, None, spec)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_instance_norm_constant_channel():
    assert np.all(instance_norm(np.full((1, 4, 4), 7.0)) == 0)


def test_instance_norm_two_point():
    eps = 1e-5
    y = instance_norm(np.array([[1.0, -1.0]]), eps)
    np.testing.assert_allclose(y[0], [1 / np.sqrt(1 + eps), -1 / np.sqrt(1 + eps)], rtol=0, atol=1e-15)


def test_instance_norm_single_element():
    assert instance_norm(np.array([[[3.0]]]))[0, 0, 0] == 0


def test_instance_norm_statistics(rng):
    x = rng.normal(3.0, 5.0, size=(4, 6, 7, 8))
    y = instance_norm(x)
    assert np.all(np.abs(y.mean(axis=(1, 2, 3))) < 1e-6)
    assert np.all(np.abs(y.var(axis=(1, 2, 3)) - 1) < 1e-5)


def test_instance_norm_idempotent_and_affine(rng):
    x = rng.normal(0, 2, size=(3, 10, 10))
    # a second pass rescales by about 1 - eps/2, so the change grows with |y| * eps
    y = instance_norm(x, eps=1e-6)
    assert np.max(np.abs(instance_norm(y, eps=1e-6) - y)) < 1e-5
    y = instance_norm(x)
    z = instance_norm(x, scale=[1, 2, 3], shift=[0, 1, -1])
    np.testing.assert_allclose(z, y * np.array([1, 2, 3])[:, None, None] + np.array([0, 1, -1])[:, None, None])


def test_relu_and_sigmoid():
    np.testing.assert_array_equal(relu(np.array([-2.0, 3.0])), [0.0, 3.0])
    s = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    np.testing.assert_array_equal(s, [0.0, 0.5, 1.0])


def test_fully_connected(rng):
    x = rng.normal(size=8)
    np.testing.assert_array_equal(fully_connected(x, np.eye(8), np.zeros(8)), x)
    w, b = rng.normal(size=(8, 8)), rng.normal(size=8)
    expected = np.array([sum(w[i, j] * x[j] for j in range(8)) + b[i] for i in range(8)])
    assert np.max(np.abs(fully_connected(x, w, b) - expected)) < 1e-12
    with pytest.raises(ValueError):
        fully_connected(np.ones(7), np.eye(8))


def test_seeded_init():
    a, b = seeded_init((3, 4, 5), seed=0), seeded_init((3, 4, 5), seed=0)
    np.testing.assert_array_equal(a, b)
    assert np.any(seeded_init((3, 4, 5), seed=1) != a)
    big = seeded_init((100_000,), "normal", seed=7)
    assert abs(big.mean()) < 3 * 0.02 / np.sqrt(1e5)
    u = seeded_init((16, 4, 3, 3), "uniform_fan_in", seed=3)
    assert np.all(np.abs(u) <= 1 / 6)
    with pytest.raises(ValueError):
        seeded_init((2,), "xavier")
