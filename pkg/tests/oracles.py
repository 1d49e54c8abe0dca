"""Independent brute-force oracles used by tests.

Everything here is deliberately written as plain Python loops over indices,
independent of the im2col / vectorised production paths it is used to check.
"""

import numpy as np


def naive_pad2d(x, pad, mode, value=0.0):
    """x: (N, C, H, W) ndarray; mode in {'zero', 'reflect', 'replicate'}."""
    n, c, h, w = x.shape
    out = np.full((n, c, h + 2 * pad, w + 2 * pad), value, dtype=x.dtype)
    for i in range(h + 2 * pad):
        for j in range(w + 2 * pad):
            si, sj = i - pad, j - pad
            if mode == "zero":
                if 0 <= si < h and 0 <= sj < w:
                    out[:, :, i, j] = x[:, :, si, sj]
                continue
            if mode == "reflect":
                si = -si if si < 0 else (2 * (h - 1) - si if si >= h else si)
                sj = -sj if sj < 0 else (2 * (w - 1) - sj if sj >= w else sj)
            else:  # replicate
                si = min(max(si, 0), h - 1)
                sj = min(max(sj, 0), w - 1)
            out[:, :, i, j] = x[:, :, si, sj]
    return out


def naive_conv2d(x, weight, bias=None, stride=1, pad=0, pad_mode="zero"):
    """Direct-sum cross-correlation; summation order channel, then kh, then kw."""
    if pad:
        x = naive_pad2d(x, pad, pad_mode)
    n, c, h, w = x.shape
    cout, cin, kh, kw = weight.shape
    assert c == cin
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo), dtype=x.dtype)
    for b in range(n):
        for o in range(cout):
            for i in range(ho):
                for j in range(wo):
                    acc = x.dtype.type(0)
                    for ci in range(cin):
                        for u in range(kh):
                            for v in range(kw):
                                acc += x[b, ci, i * stride + u, j * stride + v] \
                                    * weight[o, ci, u, v]
                    if bias is not None:
                        acc += bias[o]
                    out[b, o, i, j] = acc
    return out


def naive_maxpool2d(x, kernel, stride, pad=0):
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)),
                   mode="constant", constant_values=-np.inf)
    n, c, h, w = x.shape
    ho = (h - kernel) // stride + 1
    wo = (w - kernel) // stride + 1
    out = np.empty((n, c, ho, wo), dtype=x.dtype)
    for b in range(n):
        for ci in range(c):
            for i in range(ho):
                for j in range(wo):
                    out[b, ci, i, j] = x[b, ci,
                                         i * stride:i * stride + kernel,
                                         j * stride:j * stride + kernel].max()
    return out


def channel_stats(x):
    """Per-channel mean and biased variance of an (N, C, H, W) array."""
    n, c, h, w = x.shape
    means = np.empty(c, dtype=np.float64)
    variances = np.empty(c, dtype=np.float64)
    for ci in range(c):
        vals = [float(x[b, ci, i, j])
                for b in range(n) for i in range(h) for j in range(w)]
        m = sum(vals) / len(vals)
        means[ci] = m
        variances[ci] = sum((v - m) ** 2 for v in vals) / len(vals)
    return means, variances


def scalar_sgd_updates(grad, lr, momentum, weight_decay, w0, steps):
    """Hand iteration of v <- mu*v + (g + wd*w); w <- w - lr*v on a scalar."""
    w, v = w0, 0.0
    history = []
    for _ in range(steps):
        v = momentum * v + (grad + weight_decay * w)
        w = w - lr * v
        history.append(w)
    return history
