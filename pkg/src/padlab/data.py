"""Desk-scale datasets and the train/eval transform pipelines.

Datasets are lists of `LabeledImage` (pixels in [0, 1], shape (3, S, S)).
The on-disk format is the classic CIFAR-10 binary layout (3073-byte records:
one label byte, then 3072 pixel bytes as R/G/B planes of a 32x32 image), which
needs no image codec; synthetic datasets serialize to the same layout.

The border-location task probes boundary sensitivity: a bright 3x3 patch is
dropped on low noise at a uniformly random position and the label says whether
the patch touches the outer 2-pixel ring. Plain translation-invariant features
cannot solve it; padding cues or an explicit pad-indicator channel can.

Resizing is bilinear with the half-pixel (align_corners=false) convention;
the random resized crop samples area scale then log-aspect, with up to ten
attempts and a centered fallback, and skips resampling when the sampled crop
already has the target size (which keeps identity configs bit-exact).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import ConfigError, CorruptFileError, InvalidLabelError
from .rng import Rng

RECORD_BYTES = 3073
CIFAR_SIDE = 32


@dataclass
class LabeledImage:
    pixels: Tensor  # (3, S, S), values in [0, 1]
    label: int


@dataclass(frozen=True)
class TrainAugment:
    random_resized_crop_size: int
    horizontal_flip_prob: float = 0.5
    scale: tuple = (0.08, 1.0)
    aspect: tuple = (3.0 / 4.0, 4.0 / 3.0)


@dataclass(frozen=True)
class EvalAugment:
    resize_size: int
    center_crop_size: int

    def __post_init__(self):
        if self.center_crop_size > self.resize_size:
            raise ConfigError(
                f"center crop {self.center_crop_size} > resize {self.resize_size}")


@dataclass(frozen=True)
class AugmentConfig:
    train: TrainAugment
    eval: EvalAugment
    normalize_mean: tuple = (0.0, 0.0, 0.0)
    normalize_std: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if len(self.normalize_mean) != 3 or len(self.normalize_std) != 3:
            raise ConfigError("normalization needs 3 channel values")
        if any(s <= 0 for s in self.normalize_std):
            raise ConfigError("normalize_std components must be > 0")


def identity_augment(size: int) -> AugmentConfig:
    """Pipelines that pass `size`-sized images through unchanged."""
    return AugmentConfig(
        train=TrainAugment(size, horizontal_flip_prob=0.0,
                           scale=(1.0, 1.0), aspect=(1.0, 1.0)),
        eval=EvalAugment(size, size))


# ---------------------------------------------------------------------------
# on-disk format

def load_cifar_binary(path) -> list[LabeledImage]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) == 0 or len(blob) % RECORD_BYTES != 0:
        raise CorruptFileError(
            f"{path}: size {len(blob)} is not a multiple of {RECORD_BYTES}")
    records = np.frombuffer(blob, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    labels = records[:, 0]
    if labels.max() > 9:
        raise InvalidLabelError(f"{path}: label byte {labels.max()} > 9")
    planes = records[:, 1:].reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE)
    pixels = planes.astype(np.float32) / 255.0
    return [LabeledImage(Tensor(pixels[i]), int(labels[i]))
            for i in range(len(labels))]


def save_cifar_binary(images, path):
    chunks = []
    for img in images:
        if img.pixels.shape != (3, CIFAR_SIDE, CIFAR_SIDE):
            raise ConfigError(
                f"binary layout stores (3, 32, 32) images, got {img.pixels.shape}")
        if not (0 <= img.label <= 9):
            raise InvalidLabelError(f"label {img.label} outside [0, 9]")
        quantized = np.rint(img.pixels.data * 255.0).astype(np.uint8)
        chunks.append(bytes([img.label]) + quantized.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


# ---------------------------------------------------------------------------
# synthetic boundary-sensitive task

def gen_border_task(n: int, size: int, rng: Rng) -> list[LabeledImage]:
    """Bright 3x3 patch on faint noise; label 1 iff it touches the outer ring.

    Per image the draw order is fixed: noise block first, then the patch
    anchor, so generation is reproducible from the seed alone.
    """
    if size < 8:
        raise ConfigError(f"size must be >= 8, got {size}")
    images = []
    for _ in range(n):
        pix = rng.uniform((3, size, size), 0.0, 0.2)
        r = int(rng.integers(0, size - 2))
        c = int(rng.integers(0, size - 2))
        pix[:, r:r + 3, c:c + 3] = 1.0
        touches = r <= 1 or r >= size - 4 or c <= 1 or c >= size - 4
        images.append(LabeledImage(Tensor(pix), int(touches)))
    return images


# ---------------------------------------------------------------------------
# transforms

def resize_bilinear(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """(C, H, W) -> (C, out_h, out_w), half-pixel centers."""
    c, h, w = pixels.shape
    if (h, w) == (out_h, out_w):
        return pixels.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0).astype(pixels.dtype)[None, :, None]
    wx = (xs - x0).astype(pixels.dtype)[None, None, :]
    top = pixels[:, y0][:, :, x0] * (1 - wx) + pixels[:, y0][:, :, x1] * wx
    bot = pixels[:, y1][:, :, x0] * (1 - wx) + pixels[:, y1][:, :, x1] * wx
    return top * (1 - wy) + bot * wy


def _normalize(pixels: np.ndarray, cfg: AugmentConfig) -> np.ndarray:
    if cfg.normalize_mean == (0.0, 0.0, 0.0) and cfg.normalize_std == (1.0, 1.0, 1.0):
        return pixels
    mean = np.asarray(cfg.normalize_mean, pixels.dtype)[:, None, None]
    std = np.asarray(cfg.normalize_std, pixels.dtype)[:, None, None]
    return (pixels - mean) / std


def augment_train(img: LabeledImage, cfg: AugmentConfig, rng: Rng) -> Tensor:
    """Random resized crop, horizontal flip, channel normalization."""
    t = cfg.train
    pixels = img.pixels.data
    _, h, w = pixels.shape
    area = h * w
    out = t.random_resized_crop_size
    ch = cw = None
    for _ in range(10):
        target = area * float(rng.uniform((), t.scale[0], t.scale[1], np.float64))
        log_lo, log_hi = np.log(t.aspect[0]), np.log(t.aspect[1])
        ratio = float(np.exp(rng.uniform((), log_lo, log_hi, np.float64)))
        cw_try = int(round(np.sqrt(target * ratio)))
        ch_try = int(round(np.sqrt(target / ratio)))
        if 0 < cw_try <= w and 0 < ch_try <= h:
            ch, cw = ch_try, cw_try
            break
    if ch is None:  # centered fallback, aspect clamped
        in_ratio = w / h
        if in_ratio < t.aspect[0]:
            cw, ch = w, min(h, int(round(w / t.aspect[0])))
        elif in_ratio > t.aspect[1]:
            ch, cw = h, min(w, int(round(h * t.aspect[1])))
        else:
            ch, cw = h, w
        top, left = (h - ch) // 2, (w - cw) // 2
    else:
        top = int(rng.integers(0, h - ch + 1))
        left = int(rng.integers(0, w - cw + 1))
    crop = pixels[:, top:top + ch, left:left + cw]
    resized = resize_bilinear(crop, out, out)
    if t.horizontal_flip_prob > 0:
        if float(rng.uniform((), 0.0, 1.0, np.float64)) < t.horizontal_flip_prob:
            resized = resized[:, :, ::-1]
    return Tensor(np.ascontiguousarray(_normalize(resized, cfg)))


def augment_eval(img: LabeledImage, cfg: AugmentConfig) -> Tensor:
    """Deterministic resize, center crop, normalization."""
    e = cfg.eval
    resized = resize_bilinear(img.pixels.data, e.resize_size, e.resize_size)
    top = (e.resize_size - e.center_crop_size) // 2
    crop = resized[:, top:top + e.center_crop_size, top:top + e.center_crop_size]
    return Tensor(np.ascontiguousarray(_normalize(crop, cfg)))


def channel_mean_std(images) -> tuple[tuple, tuple]:
    """Per-channel mean/std over a dataset, for filling in normalization."""
    stacked = np.stack([img.pixels.data for img in images])
    mean = stacked.mean(axis=(0, 2, 3))
    std = stacked.std(axis=(0, 2, 3))
    return tuple(float(v) for v in mean), tuple(float(v) for v in std)
