"""Padding operators and the layer set used by the VGG/ResNet-style models.

Every operation here is a pure function of Variables (plus an explicit Rng
where sampling is involved). Passing a `Tape` records the backward closure;
passing None runs forward-only. Padding is deliberately a separate operator
composed before convolution, so the behaviour of the pad-indicator channel
under each padding mode is directly observable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import Tape, Tensor, Variable
from .errors import (DegenerateBatchError, GeometryError, InvalidLabelError,
                     InvalidPadError, ShapeError)
from .rng import Rng


class PaddingMode(enum.Enum):
    ZERO = "zero"
    REFLECT = "reflect"
    REPLICATE = "replicate"


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    pad: int = 0
    padding_mode: PaddingMode = PaddingMode.ZERO
    bias: bool = True

    def __post_init__(self):
        if self.kernel_h < 1 or self.kernel_w < 1:
            raise ShapeError("kernel dims must be >= 1")
        if self.stride < 1:
            raise ShapeError("stride must be >= 1")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ShapeError("channel counts must be >= 1")
        if self.pad < 0:
            raise InvalidPadError("pad must be non-negative")


@dataclass(frozen=True)
class BatchNormSpec:
    num_features: int
    eps: float = 1e-5
    momentum: float = 0.1

    def __post_init__(self):
        if self.eps <= 0:
            raise ShapeError("eps must be > 0")
        if not (0 < self.momentum <= 1):
            raise ShapeError("momentum must be in (0, 1]")


def _out_var(data, inputs):
    return Variable(Tensor(data), requires_grad=any(v.requires_grad for v in inputs))


def _record(tape, inputs, out, backward_fn):
    if tape is not None and out.requires_grad:
        tape.record(inputs, out, backward_fn)


# ---------------------------------------------------------------------------
# padding

def _border_index(n: int, pad: int, mode: PaddingMode) -> np.ndarray:
    if mode is PaddingMode.REFLECT:
        left = list(range(pad, 0, -1))
        right = list(range(n - 2, n - 2 - pad, -1))
    else:
        left = [0] * pad
        right = [n - 1] * pad
    return np.asarray(left + list(range(n)) + right)


def _fold_axis(g: np.ndarray, idx: np.ndarray, axis: int, n: int) -> np.ndarray:
    """Scatter-add g along `axis` according to idx, shrinking it to length n."""
    acc = np.zeros(g.shape[:axis] + (n,) + g.shape[axis + 1:], dtype=g.dtype)
    np.add.at(np.moveaxis(acc, axis, 0), idx, np.moveaxis(g, axis, 0))
    return acc


def pad2d(x: Variable, pad: int, mode: PaddingMode = PaddingMode.ZERO,
          value: float = 0.0, tape: Tape | None = None) -> Variable:
    """Pad the two spatial axes of an (N, C, H, W) Variable by `pad` on each side."""
    if len(x.shape) != 4:
        raise ShapeError(f"pad2d expects rank 4, got {x.shape}")
    if pad < 0:
        raise InvalidPadError("pad must be non-negative")
    if pad == 0:
        return x
    _, _, h, w = x.shape
    xd = x.value.data
    if mode is PaddingMode.ZERO:
        out_data = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad)),
                          mode="constant", constant_values=value)
        out = _out_var(out_data, (x,))

        def backward_zero(g):
            return (g[:, :, pad:-pad, pad:-pad],)

        _record(tape, (x,), out, backward_zero)
        return out

    if mode is PaddingMode.REFLECT and pad >= min(h, w):
        raise InvalidPadError(
            f"reflect pad {pad} needs pad < min spatial dim {min(h, w)}")
    ridx = _border_index(h, pad, mode)
    cidx = _border_index(w, pad, mode)
    out_data = xd[:, :, ridx][:, :, :, cidx]
    out = _out_var(out_data, (x,))

    def backward_border(g):
        folded = _fold_axis(g, ridx, axis=2, n=h)
        return (_fold_axis(folded, cidx, axis=3, n=w),)

    _record(tape, (x,), out, backward_border)
    return out


def attach_pad_channel(x: Variable, tape: Tape | None = None) -> Variable:
    """Append an all-ones indicator channel: (N, C, H, W) -> (N, C+1, H, W).

    After subsequent zero padding the appended channel is exactly 1 on the
    original extent and 0 on the padded frame. Reflect or replicate padding
    keeps it 1 everywhere, which defeats the marker; model builders reject
    that combination.
    """
    if len(x.shape) != 4:
        raise ShapeError(f"attach_pad_channel expects rank 4, got {x.shape}")
    n, c, h, w = x.shape
    ones = np.ones((n, 1, h, w), dtype=x.value.data.dtype)
    out = _out_var(np.concatenate([x.value.data, ones], axis=1), (x,))

    def backward_attach(g):
        return (g[:, :c],)

    _record(tape, (x,), out, backward_attach)
    return out


# ---------------------------------------------------------------------------
# convolution

def _im2col(xd: np.ndarray, kh: int, kw: int, s: int):
    n, c, h, w = xd.shape
    ho = (h - kh) // s + 1
    wo = (w - kw) // s + 1
    win = sliding_window_view(xd, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))
    return cols.reshape(n * ho * wo, c * kh * kw), ho, wo


def _col2im(dcols, xshape, kh, kw, s, ho, wo):
    n, c, h, w = xshape
    dx = np.zeros(xshape, dtype=dcols.dtype)
    d6 = dcols.reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i:i + s * ho:s, j:j + s * wo:s] += d6[:, :, i, j]
    return dx


def conv2d(x: Variable, weight: Variable, bias: Variable | None,
           spec: ConvSpec, tape: Tape | None = None) -> Variable:
    """Cross-correlation of x with `weight` (C_out, C_in, k_h, k_w).

    Padding per spec.pad / spec.padding_mode is applied first as a separate
    pad2d op; the core here always runs on the already-padded tensor.
    """
    if len(x.shape) != 4:
        raise ShapeError(f"conv2d expects rank 4, got {x.shape}")
    if x.shape[1] != spec.in_channels:
        raise ShapeError(
            f"input has {x.shape[1]} channels, spec expects {spec.in_channels}")
    if weight.shape != (spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w):
        raise ShapeError(f"weight shape {weight.shape} does not match spec")
    if spec.pad:
        x = pad2d(x, spec.pad, spec.padding_mode, tape=tape)
    n, c, h, w = x.shape
    kh, kw, s = spec.kernel_h, spec.kernel_w, spec.stride
    ho = (h - kh) // s + 1
    wo = (w - kw) // s + 1
    if ho < 1 or wo < 1:
        raise GeometryError(
            f"conv output {ho}x{wo} < 1 for input {h}x{w}, kernel {kh}x{kw}, stride {s}")

    cols, ho, wo = _im2col(x.value.data, kh, kw, s)
    wmat = weight.value.data.reshape(spec.out_channels, -1)
    out_mat = cols @ wmat.T
    if bias is not None:
        out_mat = out_mat + bias.value.data
    out_data = out_mat.reshape(n, ho, wo, spec.out_channels).transpose(0, 3, 1, 2)
    inputs = (x, weight) if bias is None else (x, weight, bias)
    out = _out_var(out_data, inputs)

    def backward_conv(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, spec.out_channels)
        dx = dw = db = None
        if x.requires_grad:
            dx = _col2im(gmat @ wmat, (n, c, h, w), kh, kw, s, ho, wo)
        if weight.requires_grad:
            dw = (gmat.T @ cols).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            db = g.sum(axis=(0, 2, 3))
        return (dx, dw) if bias is None else (dx, dw, db)

    _record(tape, inputs, out, backward_conv)
    return out


# ---------------------------------------------------------------------------
# batch normalisation

class BatchNormState:
    """Running statistics owned by a single training run."""

    def __init__(self, num_features: int, dtype=np.float32):
        self.running_mean = np.zeros(num_features, dtype=dtype)
        self.running_var = np.ones(num_features, dtype=dtype)


def batchnorm2d(x: Variable, gamma: Variable, beta: Variable,
                state: BatchNormState, spec: BatchNormSpec, mode: str,
                tape: Tape | None = None) -> Variable:
    """Per-channel (x - mean) / sqrt(var + eps) * gamma + beta.

    Train mode uses batch statistics (biased variance) and updates the running
    statistics in `state` with `momentum`; eval mode uses the running ones.
    """
    if len(x.shape) != 4:
        raise ShapeError(f"batchnorm2d expects rank 4, got {x.shape}")
    if x.shape[1] != spec.num_features:
        raise ShapeError(
            f"input has {x.shape[1]} channels, spec expects {spec.num_features}")
    xd = x.value.data
    n, c, h, w = xd.shape
    gd = gamma.value.data
    inputs = (x, gamma, beta)

    if mode == "train":
        m = n * h * w
        if m < 2:
            raise DegenerateBatchError("train-mode batchnorm needs N*H*W >= 2")
        mu = xd.mean(axis=(0, 2, 3))
        diff = xd - mu[None, :, None, None]
        var = np.mean(diff * diff, axis=(0, 2, 3))
        inv = 1.0 / np.sqrt(var + spec.eps)
        xhat = diff * inv[None, :, None, None]
        mom = spec.momentum
        state.running_mean = ((1 - mom) * state.running_mean + mom * mu).astype(
            state.running_mean.dtype)
        unbiased = var * (m / (m - 1))
        state.running_var = ((1 - mom) * state.running_var + mom * unbiased).astype(
            state.running_var.dtype)
    else:
        inv = 1.0 / np.sqrt(state.running_var + spec.eps)
        xhat = (xd - state.running_mean[None, :, None, None]) * inv[None, :, None, None]

    out = _out_var(gd[None, :, None, None] * xhat + beta.value.data[None, :, None, None],
                   inputs)

    if mode == "train":
        def backward_bn(g):
            dxhat = g * gd[None, :, None, None]
            dx = None
            if x.requires_grad:
                mean_d = dxhat.mean(axis=(0, 2, 3), keepdims=True)
                mean_dx = (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
                dx = inv[None, :, None, None] * (dxhat - mean_d - xhat * mean_dx)
            dgamma = (g * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
            dbeta = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
            return dx, dgamma, dbeta
    else:
        def backward_bn(g):
            dx = g * (gd * inv)[None, :, None, None] if x.requires_grad else None
            dgamma = (g * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
            dbeta = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
            return dx, dgamma, dbeta

    _record(tape, inputs, out, backward_bn)
    return out


# ---------------------------------------------------------------------------
# initialisation

def kaiming_init(shape, rng: Rng, dtype: str = "f32") -> Tensor:
    """Normal(0, 2 / fan_in) weights; fan_in is the product of non-leading dims."""
    shape = tuple(int(d) for d in shape)
    if len(shape) < 2 or any(d < 1 for d in shape):
        raise ShapeError(f"bad weight shape {shape}")
    fan_in = 1
    for d in shape[1:]:
        fan_in *= d
    std = float(np.sqrt(2.0 / fan_in))
    return Tensor(rng.normal(shape, std=std,
                             dtype=np.float32 if dtype == "f32" else np.float64))


# ---------------------------------------------------------------------------
# pointwise and reduction layers

def relu(x: Variable, tape: Tape | None = None) -> Variable:
    out = _out_var(np.maximum(x.value.data, 0), (x,))
    if out.requires_grad:
        mask = x.value.data > 0
        _record(tape, (x,), out, lambda g: (g * mask,))
    return out


def add(a: Variable, b: Variable, tape: Tape | None = None) -> Variable:
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    out = _out_var(a.value.data + b.value.data, (a, b))
    _record(tape, (a, b), out, lambda g: (g, g))
    return out


def mul(a: Variable, b: Variable, tape: Tape | None = None) -> Variable:
    if a.shape != b.shape:
        raise ShapeError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    out = _out_var(a.value.data * b.value.data, (a, b))
    ad, bd = a.value.data, b.value.data
    _record(tape, (a, b), out, lambda g: (g * bd, g * ad))
    return out


def sum_all(x: Variable, tape: Tape | None = None) -> Variable:
    out = _out_var(x.value.data.sum().reshape(1), (x,))
    shape, dtype = x.value.data.shape, x.value.data.dtype
    _record(tape, (x,), out,
            lambda g: (np.full(shape, g.reshape(()), dtype=dtype),))
    return out


def mean_all(x: Variable, tape: Tape | None = None) -> Variable:
    out = _out_var(x.value.data.mean().reshape(1), (x,))
    shape, dtype, size = x.value.data.shape, x.value.data.dtype, x.value.data.size
    _record(tape, (x,), out,
            lambda g: (np.full(shape, g.reshape(()) / size, dtype=dtype),))
    return out


def flatten(x: Variable, tape: Tape | None = None) -> Variable:
    n = x.shape[0]
    shape = x.value.data.shape
    out = _out_var(x.value.data.reshape(n, -1), (x,))
    _record(tape, (x,), out, lambda g: (g.reshape(shape),))
    return out


def maxpool2d(x: Variable, kernel: int, stride: int, pad: int = 0,
              tape: Tape | None = None) -> Variable:
    """Max over kernel x kernel windows; padded cells (if any) never win."""
    if len(x.shape) != 4:
        raise ShapeError(f"maxpool2d expects rank 4, got {x.shape}")
    xd = x.value.data
    if pad:
        xd = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad)),
                    mode="constant", constant_values=-np.inf)
    n, c, h, w = xd.shape
    ho = (h - kernel) // stride + 1
    wo = (w - kernel) // stride + 1
    if ho < 1 or wo < 1:
        raise GeometryError(f"pool output {ho}x{wo} < 1")
    win = sliding_window_view(xd, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    flat = win.reshape(n, c, ho, wo, kernel * kernel)
    arg = flat.argmax(axis=-1)
    out_data = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    out = _out_var(out_data, (x,))

    def backward_pool(g):
        dxp = np.zeros((n, c, h, w), dtype=g.dtype)
        ii = (np.arange(ho) * stride)[None, None, :, None] + arg // kernel
        jj = (np.arange(wo) * stride)[None, None, None, :] + arg % kernel
        nn_ = np.arange(n)[:, None, None, None]
        cc = np.arange(c)[None, :, None, None]
        np.add.at(dxp, (nn_, cc, ii, jj), g)
        if pad:
            dxp = dxp[:, :, pad:-pad, pad:-pad]
        return (dxp,)

    _record(tape, (x,), out, backward_pool)
    return out


def global_avgpool(x: Variable, tape: Tape | None = None) -> Variable:
    """Mean over the spatial axes: (N, C, H, W) -> (N, C)."""
    if len(x.shape) != 4:
        raise ShapeError(f"global_avgpool expects rank 4, got {x.shape}")
    n, c, h, w = x.shape
    out = _out_var(x.value.data.mean(axis=(2, 3)), (x,))
    _record(tape, (x,), out,
            lambda g: (np.broadcast_to(g[:, :, None, None] / (h * w),
                                       (n, c, h, w)).astype(g.dtype, copy=True),))
    return out


def adaptive_avgpool2d(x: Variable, out_h: int, out_w: int,
                       tape: Tape | None = None) -> Variable:
    """Average pooling to a fixed output size using proportional bins."""
    if len(x.shape) != 4:
        raise ShapeError(f"adaptive_avgpool2d expects rank 4, got {x.shape}")
    n, c, h, w = x.shape
    hb = [(int(np.floor(i * h / out_h)), int(np.ceil((i + 1) * h / out_h)))
          for i in range(out_h)]
    wb = [(int(np.floor(j * w / out_w)), int(np.ceil((j + 1) * w / out_w)))
          for j in range(out_w)]
    xd = x.value.data
    out_data = np.empty((n, c, out_h, out_w), dtype=xd.dtype)
    for i, (h0, h1) in enumerate(hb):
        for j, (w0, w1) in enumerate(wb):
            out_data[:, :, i, j] = xd[:, :, h0:h1, w0:w1].mean(axis=(2, 3))
    out = _out_var(out_data, (x,))

    def backward_adaptive(g):
        dx = np.zeros((n, c, h, w), dtype=g.dtype)
        for i, (h0, h1) in enumerate(hb):
            for j, (w0, w1) in enumerate(wb):
                area = (h1 - h0) * (w1 - w0)
                dx[:, :, h0:h1, w0:w1] += g[:, :, i:i + 1, j:j + 1] / area
        return (dx,)

    _record(tape, (x,), out, backward_adaptive)
    return out


def linear(x: Variable, weight: Variable, bias: Variable | None,
           tape: Tape | None = None) -> Variable:
    """x (N, F) @ weight (O, F)^T + bias."""
    if len(x.shape) != 2 or len(weight.shape) != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear shapes incompatible: {x.shape} vs {weight.shape}")
    out_mat = x.value.data @ weight.value.data.T
    if bias is not None:
        out_mat = out_mat + bias.value.data
    inputs = (x, weight) if bias is None else (x, weight, bias)
    out = _out_var(out_mat, inputs)
    xd, wd = x.value.data, weight.value.data

    def backward_linear(g):
        dx = g @ wd if x.requires_grad else None
        dw = g.T @ xd if weight.requires_grad else None
        if bias is None:
            return dx, dw
        db = g.sum(axis=0) if bias.requires_grad else None
        return dx, dw, db

    _record(tape, inputs, out, backward_linear)
    return out


def dropout(x: Variable, p: float, mode: str, rng: Rng | None = None,
            tape: Tape | None = None) -> Variable:
    """Inverted dropout: train mode zeroes with prob p and rescales by 1/(1-p)."""
    if not (0 <= p < 1):
        raise ShapeError(f"dropout rate must be in [0, 1), got {p}")
    if mode != "train" or p == 0:
        return x
    if rng is None:
        raise ShapeError("train-mode dropout needs an Rng")
    keep = rng.uniform(x.shape, dtype=np.float64) >= p
    mask = keep.astype(x.value.data.dtype) / (1.0 - p)
    out = _out_var(x.value.data * mask, (x,))
    _record(tape, (x,), out, lambda g: (g * mask,))
    return out


def softmax(x: Variable, tape: Tape | None = None) -> Variable:
    """Row-wise softmax over the last axis of an (N, K) Variable."""
    z = x.value.data - x.value.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    out = _out_var(p, (x,))
    _record(tape, (x,), out,
            lambda g: (p * (g - (g * p).sum(axis=-1, keepdims=True)),))
    return out


def softmax_cross_entropy(logits: Variable, labels: np.ndarray,
                          tape: Tape | None = None) -> Variable:
    """Mean over the batch of -log softmax(logits)[label]; returns shape (1,)."""
    if len(logits.shape) != 2:
        raise ShapeError(f"logits must be (N, K), got {logits.shape}")
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels must be ({n},), got {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise InvalidLabelError(
            f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    z = logits.value.data - logits.value.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()
    out = _out_var(np.asarray([loss], dtype=logits.value.data.dtype), (logits,))

    def backward_ce(g):
        grad = np.exp(logp)
        grad[rows, labels] -= 1.0
        return (grad * (g.reshape(()) / n),)

    _record(tape, (logits,), out, backward_ce)
    return out
