"""Forward/backward primitives for each layer kind.

All activations are (N, C, H, W) arrays.  Convolution is cross-correlation
computed by patch unrolling (im2col) into a single matrix multiply; pooling
runs in ceil mode with zero padding never applied (trailing windows may be
partial and avg pooling divides by the number of valid elements).
"""

from __future__ import annotations

import numpy as np

from .graph import pool_out_dim


def im2col(x: np.ndarray, kernel: int, stride: int, pad: int) -> np.ndarray:
    """Unroll conv patches of x (N, C, H, W) into (N, P, C*k*k).

    P is the number of output positions (out_h * out_w); padding is zero-fill.
    """
    n, c, h, w = x.shape
    oh = (h + 2 * pad - kernel) // stride + 1
    ow = (w + 2 * pad - kernel) // stride + 1
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, c, kernel, kernel, oh, ow), dtype=x.dtype)
    for i in range(kernel):
        i_max = i + stride * oh
        for j in range(kernel):
            j_max = j + stride * ow
            cols[:, :, i, j, :, :] = x[:, :, i:i_max:stride, j:j_max:stride]
    return cols.transpose(0, 4, 5, 1, 2, 3).reshape(n, oh * ow, c * kernel * kernel)


def col2im(
    cols: np.ndarray, x_shape: tuple[int, ...], kernel: int, stride: int, pad: int
) -> np.ndarray:
    """Scatter-add (N, P, C*k*k) patch gradients back to the input shape."""
    n, c, h, w = x_shape
    oh = (h + 2 * pad - kernel) // stride + 1
    ow = (w + 2 * pad - kernel) // stride + 1
    cols = cols.reshape(n, oh, ow, c, kernel, kernel).transpose(0, 3, 4, 5, 1, 2)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kernel):
        i_max = i + stride * oh
        for j in range(kernel):
            j_max = j + stride * ow
            out[:, :, i:i_max:stride, j:j_max:stride] += cols[:, :, i, j, :, :]
    if pad:
        out = out[:, :, pad:-pad, pad:-pad]
    return out


def conv_forward(x, weight, bias, stride, pad):
    n = x.shape[0]
    out_c, in_c, kh, kw = weight.shape
    oh = (x.shape[2] + 2 * pad - kh) // stride + 1
    ow = (x.shape[3] + 2 * pad - kw) // stride + 1
    cols = im2col(x, kh, stride, pad)
    w_mat = weight.reshape(out_c, -1)
    out = cols @ w_mat.T + bias
    return out.transpose(0, 2, 1).reshape(n, out_c, oh, ow)


def conv_backward(dout, x, weight, stride, pad):
    """Returns (dx, dweight, dbias); dout is (N, out_c, oh, ow)."""
    n, out_c = dout.shape[:2]
    cols = im2col(x, weight.shape[2], stride, pad)
    dout_mat = dout.reshape(n, out_c, -1).transpose(0, 2, 1)  # (N, P, out_c)
    dw = np.einsum("npi,npj->ij", dout_mat, cols).reshape(weight.shape)
    db = dout.sum(axis=(0, 2, 3))
    dcols = dout_mat @ weight.reshape(out_c, -1)
    dx = col2im(dcols, x.shape, weight.shape[2], stride, pad)
    return dx, dw, db


def fc_forward(x, weight, bias):
    n = x.shape[0]
    out = x.reshape(n, -1) @ weight.T + bias
    return out.reshape(n, -1, 1, 1)


def fc_backward(dout, x, weight):
    n = x.shape[0]
    dout_mat = dout.reshape(n, -1)
    x_mat = x.reshape(n, -1)
    dw = dout_mat.T @ x_mat
    db = dout_mat.sum(axis=0)
    dx = (dout_mat @ weight).reshape(x.shape)
    return dx, dw, db


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(dout, x):
    return dout * (x > 0)


def _pool_windows(h, w, kernel, stride):
    oh = pool_out_dim(h, kernel, stride)
    ow = pool_out_dim(w, kernel, stride)
    rows = [(i * stride, min(i * stride + kernel, h)) for i in range(oh)]
    cols = [(j * stride, min(j * stride + kernel, w)) for j in range(ow)]
    return rows, cols


def maxpool_forward(x, kernel, stride):
    """Returns (out, argmax) with argmax flat within each (possibly partial) window."""
    n, c, h, w = x.shape
    rows, cols = _pool_windows(h, w, kernel, stride)
    out = np.empty((n, c, len(rows), len(cols)), dtype=x.dtype)
    arg = np.empty((n, c, len(rows), len(cols)), dtype=np.int64)
    for i, (h0, h1) in enumerate(rows):
        for j, (w0, w1) in enumerate(cols):
            win = x[:, :, h0:h1, w0:w1].reshape(n, c, -1)
            idx = win.argmax(axis=2)
            out[:, :, i, j] = np.take_along_axis(win, idx[:, :, None], axis=2)[:, :, 0]
            arg[:, :, i, j] = idx
    return out, arg


def maxpool_backward(dout, x_shape, arg, kernel, stride):
    n, c, h, w = x_shape
    rows, cols = _pool_windows(h, w, kernel, stride)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    ni, ci = np.ogrid[:n, :c]
    for i, (h0, h1) in enumerate(rows):
        for j, (w0, w1) in enumerate(cols):
            idx = arg[:, :, i, j]
            di, dj = np.divmod(idx, w1 - w0)
            # windows can overlap when stride < kernel, so accumulate
            np.add.at(dx, (ni, ci, h0 + di, w0 + dj), dout[:, :, i, j])
    return dx


def avgpool_forward(x, kernel, stride):
    n, c, h, w = x.shape
    rows, cols = _pool_windows(h, w, kernel, stride)
    out = np.empty((n, c, len(rows), len(cols)), dtype=x.dtype)
    for i, (h0, h1) in enumerate(rows):
        for j, (w0, w1) in enumerate(cols):
            out[:, :, i, j] = x[:, :, h0:h1, w0:w1].mean(axis=(2, 3))
    return out


def avgpool_backward(dout, x_shape, kernel, stride):
    h, w = x_shape[2:]
    rows, cols = _pool_windows(h, w, kernel, stride)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    for i, (h0, h1) in enumerate(rows):
        for j, (w0, w1) in enumerate(cols):
            count = (h1 - h0) * (w1 - w0)
            dx[:, :, h0:h1, w0:w1] += (dout[:, :, i, j] / count)[:, :, None, None]
    return dx


def _channel_window_sum(x, local_size):
    """Sum of x over the across-channel window centered (Caffe-style) at each channel."""
    c = x.shape[1]
    half = (local_size - 1) // 2
    cum = np.concatenate([np.zeros_like(x[:, :1]), np.cumsum(x, axis=1)], axis=1)
    lo = np.clip(np.arange(c) - half, 0, c)
    hi = np.clip(np.arange(c) - half + local_size, 0, c)
    return cum[:, hi] - cum[:, lo]


def lrn_forward(x, local_size, alpha, beta, k):
    """Across-channel response normalization: x * (k + alpha/n * window sum of x^2)^-beta."""
    scale = k + (alpha / local_size) * _channel_window_sum(x * x, local_size)
    return x * scale ** (-beta), scale


def lrn_backward(dout, x, scale, local_size, alpha, beta):
    y_over_scale = dout * x * scale ** (-beta - 1.0)
    back = _channel_window_sum(y_over_scale, local_size)
    return dout * scale ** (-beta) - (2.0 * alpha * beta / local_size) * x * back


def dropout_forward(x, ratio, rng: np.random.Generator | None):
    """Inverted dropout; rng=None means inference/calibration (identity)."""
    if rng is None or ratio == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= ratio).astype(x.dtype) / (1.0 - ratio)
    return x * mask, mask


def dropout_backward(dout, mask):
    if mask is None:
        return dout
    return dout * mask


def concat_forward(xs):
    return np.concatenate(xs, axis=1)


def concat_backward(dout, channel_counts):
    splits = np.cumsum(channel_counts)[:-1]
    return np.split(dout, splits, axis=1)
