"""Independent reference implementations used only to check the engine.

Everything here is deliberately written the slow, obvious way (nested loops,
two-pass statistics, central finite differences) and never calls the fast
paths it is used to verify.
"""

from __future__ import annotations

import math

import numpy as np


def conv2d_naive(x, weight, bias, stride, pad):
    """Nested-loop cross-correlation, (N, C, H, W) x (O, C, k, k) -> (N, O, oh, ow)."""
    n, c, h, w = x.shape
    out_c, _, kh, kw = weight.shape
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    xp[:, :, pad:pad + h, pad:pad + w] = x
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((n, out_c, oh, ow), dtype=x.dtype)
    for img in range(n):
        for o in range(out_c):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for ch in range(c):
                        for di in range(kh):
                            for dj in range(kw):
                                acc += (
                                    xp[img, ch, i * stride + di, j * stride + dj]
                                    * weight[o, ch, di, dj]
                                )
                    out[img, o, i, j] = acc + bias[o]
    return out


def maxpool_naive(x, kernel, stride):
    n, c, h, w = x.shape
    oh = math.ceil((h - kernel) / stride) + 1
    ow = math.ceil((w - kernel) / stride) + 1
    out = np.zeros((n, c, oh, ow), dtype=x.dtype)
    for i in range(oh):
        for j in range(ow):
            h0, w0 = i * stride, j * stride
            win = x[:, :, h0:min(h0 + kernel, h), w0:min(w0 + kernel, w)]
            out[:, :, i, j] = win.max(axis=(2, 3))
    return out


def avgpool_naive(x, kernel, stride):
    n, c, h, w = x.shape
    oh = math.ceil((h - kernel) / stride) + 1
    ow = math.ceil((w - kernel) / stride) + 1
    out = np.zeros((n, c, oh, ow), dtype=x.dtype)
    for i in range(oh):
        for j in range(ow):
            h0, w0 = i * stride, j * stride
            win = x[:, :, h0:min(h0 + kernel, h), w0:min(w0 + kernel, w)]
            out[:, :, i, j] = win.mean(axis=(2, 3))
    return out


def mean_var_two_pass(values: np.ndarray):
    """Textbook two-pass population mean/variance over a 1-D array."""
    n = values.size
    mean = float(values.sum()) / n
    var = float(((values - mean) ** 2).sum()) / n
    return mean, var


def numeric_grad(f, x, h=1e-4):
    """Central-difference gradient of scalar f at array x (element loop)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def rel_err(a, b, floor=1e-4):
    """Max elementwise |a-b| / (|a| + |b| + floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / (np.abs(a) + np.abs(b) + floor)))
