import numpy as np
import numpy.testing as npt
import pytest

from convcal import layers as L

from oracles import avgpool_naive, conv2d_naive, maxpool_naive

rng = np.random.default_rng(7)


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 0), (2, 1), (3, 2)])
def test_conv_matches_nested_loop_oracle(stride, pad):
    x = rng.standard_normal((2, 3, 7, 6))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    got = L.conv_forward(x, w, b, stride, pad)
    want = conv2d_naive(x, w, b, stride, pad)
    npt.assert_allclose(got, want, rtol=1e-6, atol=1e-9)


def test_conv_on_1x5x5_input():
    x = rng.standard_normal((1, 1, 5, 5))
    w = rng.standard_normal((2, 1, 3, 3))
    b = np.zeros(2)
    got = L.conv_forward(x, w, b, 1, 0)
    want = conv2d_naive(x, w, b, 1, 0)
    assert got.shape == (1, 2, 3, 3)
    npt.assert_allclose(got, want, rtol=1e-6)


def test_fc_identity_passthrough():
    x = rng.standard_normal((3, 4, 1, 1))
    out = L.fc_forward(x, np.eye(4), np.zeros(4))
    npt.assert_allclose(out, x)


def test_relu_definition():
    out = L.relu_forward(np.array([[-1.0, 0.0, 2.0]]))
    npt.assert_array_equal(out, [[0.0, 0.0, 2.0]])


def test_relu_blocks_gradient_at_negative_input():
    x = np.array([[[[-1.0]]]])
    g = np.array([[[[5.0]]]])
    npt.assert_array_equal(L.relu_backward(g, x), [[[[0.0]]]])


@pytest.mark.parametrize("kernel,stride", [(2, 2), (3, 2), (2, 1), (3, 3)])
def test_pools_match_naive(kernel, stride):
    x = rng.standard_normal((2, 3, 7, 5))
    got_max, _ = L.maxpool_forward(x, kernel, stride)
    npt.assert_allclose(got_max, maxpool_naive(x, kernel, stride))
    got_avg = L.avgpool_forward(x, kernel, stride)
    npt.assert_allclose(got_avg, avgpool_naive(x, kernel, stride), rtol=1e-12)


def test_avgpool_partial_window_uses_valid_elements_only():
    # 1x1x3x3 input, kernel 2 stride 2: bottom-right window is the single corner
    x = np.arange(9, dtype=np.float64).reshape(1, 1, 3, 3)
    out = L.avgpool_forward(x, 2, 2)
    assert out.shape == (1, 1, 2, 2)
    assert out[0, 0, 1, 1] == x[0, 0, 2, 2]
    assert out[0, 0, 0, 1] == (x[0, 0, 0, 2] + x[0, 0, 1, 2]) / 2


@pytest.mark.parametrize("kind", ["relu", "maxpool", "avgpool"])
def test_positive_homogeneity(kind):
    x = rng.standard_normal((2, 3, 6, 6))
    for c in (0.5, 2.0, 7.3):
        if kind == "relu":
            f = L.relu_forward
        elif kind == "maxpool":
            f = lambda v: L.maxpool_forward(v, 2, 2)[0]
        else:
            f = lambda v: L.avgpool_forward(v, 2, 2)
        npt.assert_allclose(f(c * x), c * f(x), rtol=1e-12)


def test_lrn_is_not_homogeneous():
    # with k > 0 the normalizer saturates differently at different scales
    x = np.full((1, 4, 2, 2), 1.0)
    c = 10.0
    out_scaled, _ = L.lrn_forward(c * x, 3, 1.0, 0.75, 1.0)
    out, _ = L.lrn_forward(x, 3, 1.0, 0.75, 1.0)
    assert not np.allclose(out_scaled, c * out, rtol=1e-3)


def test_lrn_window_sum_matches_direct():
    x = rng.standard_normal((2, 6, 3, 3))
    n = 5
    got = L._channel_window_sum(x, n)
    half = (n - 1) // 2
    for i in range(6):
        lo, hi = max(0, i - half), min(6, i - half + n)
        npt.assert_allclose(got[:, i], x[:, lo:hi].sum(axis=1), rtol=1e-12)


def test_dropout_eval_is_identity():
    x = rng.standard_normal((2, 3, 4, 4))
    out, mask = L.dropout_forward(x, 0.5, None)
    assert mask is None
    npt.assert_array_equal(out, x)


def test_dropout_train_preserves_expectation():
    x = np.ones((1, 1, 200, 200))
    out, mask = L.dropout_forward(x, 0.4, np.random.default_rng(0))
    assert set(np.unique(mask)).issubset({0.0, 1.0 / 0.6})
    assert abs(out.mean() - 1.0) < 0.02


def test_concat_splits_back():
    a = rng.standard_normal((2, 3, 4, 4))
    b = rng.standard_normal((2, 5, 4, 4))
    out = L.concat_forward([a, b])
    ga, gb = L.concat_backward(out, [3, 5])
    npt.assert_array_equal(ga, a)
    npt.assert_array_equal(gb, b)


def test_im2col_col2im_roundtrip_counts():
    # col2im(im2col(x)) multiplies each element by how often a window covers it
    x = np.ones((1, 1, 4, 4))
    cols = L.im2col(x, 2, 1, 0)
    back = L.col2im(cols, x.shape, 2, 1, 0)
    counts = np.array(
        [[1, 2, 2, 1], [2, 4, 4, 2], [2, 4, 4, 2], [1, 2, 2, 1]], dtype=float
    )
    npt.assert_array_equal(back[0, 0], counts)
