"""Seeded training runs: SGD with step-decayed LR, per-epoch validation,
best-checkpoint selection, and training-curve queries.

A run is fully determined by (model spec, train config, datasets, seed): model
init, shuffling, augmentation and dropout all draw from named substreams of
the run seed. Wall-clock time is logged but excluded from any determinism
comparison.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, Variable, backward
from .checkpoint import model_state, read_tensors, write_tensors
from .data import AugmentConfig, augment_eval, augment_train
from .errors import ConfigError, TrainingDivergedError
from .models import Model, ModelSpec, build_model
from .nn import softmax_cross_entropy
from .rng import Rng


@dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 0.00125
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 100
    lr_step: int = 30
    lr_gamma: float = 0.1
    batch_size: int = 32
    seeds: tuple = (0, 1, 2, 3, 4)
    early_stop_top1: float | None = None  # None: always run all epochs

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be > 0")
        if not (0 <= self.momentum < 1):
            raise ConfigError("momentum must be in [0, 1)")
        if self.epochs < 1 or self.lr_step < 1 or self.batch_size < 1:
            raise ConfigError("epochs, lr_step and batch_size must be >= 1")


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """base_lr * gamma^(epoch // lr_step)."""
    if not (0 <= epoch < cfg.epochs):
        raise ConfigError(f"epoch {epoch} outside [0, {cfg.epochs})")
    return cfg.base_lr * cfg.lr_gamma ** (epoch // cfg.lr_step)


def sgd_step(params, velocity: dict, lr: float, momentum: float,
             weight_decay: float):
    """v <- momentum*v + (g + wd*w); w <- w - lr*v. Velocity persists in-place."""
    for p in params:
        g = p.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(f"non-finite gradient in {p.name}")
        if weight_decay:
            g = g + weight_decay * p.value.data
        v = velocity.get(p)
        v = g if v is None else momentum * v + g
        velocity[p] = v
        p.value.data -= (lr * v).astype(p.value.data.dtype, copy=False)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_top1: float
    lr: float
    wall_seconds: float


@dataclass
class RunLog:
    spec_id: str
    seed: int
    records: list[EpochRecord] = field(default_factory=list)

    CSV_HEADER = "spec_id,seed,epoch,train_loss,val_top1,lr,wall_seconds"

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(self.CSV_HEADER + "\n")
        for r in self.records:
            out.write(f"{self.spec_id},{self.seed},{r.epoch},{r.train_loss!r},"
                      f"{r.val_top1!r},{r.lr!r},{r.wall_seconds:.3f}\n")
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RunLog":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ConfigError("empty run log")
        log = cls(rows[0]["spec_id"], int(rows[0]["seed"]))
        for row in rows:
            log.records.append(EpochRecord(
                int(row["epoch"]), float(row["train_loss"]),
                float(row["val_top1"]), float(row["lr"]),
                float(row["wall_seconds"])))
        return log

    def best_epoch(self) -> int:
        """Epoch with the highest val_top1; first one on ties."""
        best, best_val = 0, -1.0
        for r in self.records:
            if r.val_top1 > best_val:
                best, best_val = r.epoch, r.val_top1
        return best

    def best_top1(self) -> float:
        return max(r.val_top1 for r in self.records)


def epochs_to_threshold(log: RunLog, threshold: float):
    """First epoch whose val_top1 reaches `threshold`, or None."""
    for r in log.records:
        if r.val_top1 >= threshold:
            return r.epoch
    return None


@dataclass
class Checkpoint:
    epoch: int
    val_top1: float
    tensors: dict

    def save(self, path):
        state = dict(self.tensors)
        state["meta.epoch"] = np.asarray([float(self.epoch)], np.float64)
        state["meta.val_top1"] = np.asarray([float(self.val_top1)], np.float64)
        write_tensors(path, state)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        tensors = read_tensors(path)
        epoch = int(tensors.pop("meta.epoch")[0])
        val_top1 = float(tensors.pop("meta.val_top1")[0])
        return cls(epoch, val_top1, tensors)

    def apply_to(self, model: Model):
        model.load_state(self.tensors)


def _eval_batch_array(images, augment: AugmentConfig | None) -> np.ndarray:
    if augment is None:
        return np.stack([img.pixels.data for img in images])
    return np.stack([augment_eval(img, augment).data for img in images])


def evaluate(model: Model, images, augment: AugmentConfig | None = None,
             batch_size: int = 256, _pre: np.ndarray | None = None) -> float:
    """Top-1 percentage; argmax ties resolve to the lowest class index."""
    if len(images) == 0:
        raise ConfigError("evaluate needs a non-empty dataset")
    data = _pre if _pre is not None else _eval_batch_array(images, augment)
    labels = np.asarray([img.label for img in images])
    correct = 0
    for start in range(0, len(images), batch_size):
        batch = data[start:start + batch_size]
        logits = model.forward(Variable(batch), "eval").value.data
        correct += int((logits.argmax(axis=1) == labels[start:start + batch_size]).sum())
    return 100.0 * correct / len(images)


def train_run(spec: ModelSpec, cfg: TrainConfig, train_images, val_images,
              seed: int, augment: AugmentConfig | None = None,
              progress=None) -> tuple[RunLog, Checkpoint, Model]:
    """One seeded run; returns the log, the best checkpoint and the final model.

    Raises TrainingDivergedError (with .runlog holding the partial log) on
    non-finite loss or gradients.
    """
    if len(train_images) == 0 or len(val_images) == 0:
        raise ConfigError("train and validation sets must be non-empty")
    rng = Rng(seed)
    model = build_model(spec, rng.child("init"))
    log = RunLog(spec.spec_id, seed)
    velocity: dict = {}
    params = model.parameters()
    labels_all = np.asarray([img.label for img in train_images])
    n = len(train_images)

    raw_train = None
    if augment is None:
        raw_train = np.stack([img.pixels.data for img in train_images])
    val_pre = _eval_batch_array(val_images, augment)

    best: Checkpoint | None = None
    dropout_rng = rng.child("dropout")
    try:
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            lr = lr_at(epoch, cfg)
            order = rng.child(f"shuffle.{epoch}").permutation(n)
            aug_rng = rng.child(f"augment.{epoch}")
            loss_sum, seen = 0.0, 0
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                if raw_train is not None:
                    batch = raw_train[idx]
                else:
                    batch = np.stack([augment_train(train_images[i], augment,
                                                    aug_rng).data for i in idx])
                tape = Tape()
                logits = model.forward(Variable(batch), "train", tape, dropout_rng)
                loss = softmax_cross_entropy(logits, labels_all[idx], tape)
                loss_val = float(loss.value.data[0])
                if not np.isfinite(loss_val):
                    raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
                backward(loss, tape)
                sgd_step(params, velocity, lr, cfg.momentum, cfg.weight_decay)
                model.zero_grads()
                loss_sum += loss_val * len(idx)
                seen += len(idx)
            val_top1 = evaluate(model, val_images, augment, _pre=val_pre)
            record = EpochRecord(epoch, loss_sum / seen, val_top1, lr,
                                 time.perf_counter() - t0)
            log.records.append(record)
            if progress is not None:
                progress(record)
            if best is None or val_top1 > best.val_top1:
                best = Checkpoint(epoch, val_top1,
                                  {k: v.copy() for k, v in model_state(model).items()})
            if cfg.early_stop_top1 is not None and val_top1 >= cfg.early_stop_top1:
                break
    except TrainingDivergedError as exc:
        exc.runlog = log
        raise
    return log, best, model


def split_train_val(images, val_fraction: float = 0.2):
    """Deterministic tail split; generation order is already randomized."""
    if not (0 < val_fraction < 1):
        raise ConfigError("val_fraction must be in (0, 1)")
    n_val = max(1, int(round(len(images) * val_fraction)))
    return images[:-n_val], images[-n_val:]


def run_dir(out_dir, spec_id: str, seed: int):
    from pathlib import Path
    return Path(out_dir) / spec_id / str(seed)


def save_run(out_dir, log: RunLog, best: Checkpoint):
    d = run_dir(out_dir, log.spec_id, log.seed)
    d.mkdir(parents=True, exist_ok=True)
    (d / "runlog.csv").write_text(log.to_csv())
    best.save(d / "best.ckpt")
    return d
