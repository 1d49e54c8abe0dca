import numpy as np
import pytest

from padlab.autodiff import Tensor, Variable
from padlab.data import gen_border_task
from padlab.errors import ConfigError, TrainingDivergedError
from padlab.models import ModelSpec, build_model
from padlab.rng import Rng
from padlab.training import (Checkpoint, EpochRecord, RunLog, TrainConfig,
                             epochs_to_threshold, evaluate, lr_at, sgd_step,
                             split_train_val, train_run)

from oracles import scalar_sgd_updates


# ---------------------------------------------------------------------------
# schedule

def test_lr_schedule_reference_points():
    cfg = TrainConfig()
    assert lr_at(0, cfg) == 0.00125
    assert lr_at(30, cfg) == pytest.approx(0.000125, rel=1e-12)
    assert lr_at(60, cfg) == pytest.approx(1.25e-5, rel=1e-12)
    assert lr_at(90, cfg) == pytest.approx(1.25e-6, rel=1e-12)
    assert lr_at(99, cfg) == pytest.approx(1.25e-6, rel=1e-12)


def test_lr_schedule_piecewise_and_monotone():
    cfg = TrainConfig()
    values = [lr_at(e, cfg) for e in range(100)]
    assert all(a >= b for a, b in zip(values, values[1:]))
    for e in range(99):
        if (e + 1) % 30 != 0:
            assert values[e + 1] == values[e]
        else:
            assert values[e + 1] == pytest.approx(values[e] * 0.1, rel=1e-12)


def test_lr_at_rejects_out_of_range():
    with pytest.raises(ConfigError):
        lr_at(100, TrainConfig())


# ---------------------------------------------------------------------------
# sgd

def _param(arr):
    v = Variable(Tensor(np.asarray(arr, np.float64)), requires_grad=True)
    return v


def test_sgd_vanilla_step():
    p = _param([1.0, 2.0])
    p.grad = np.array([0.5, -0.5])
    sgd_step([p], {}, lr=0.1, momentum=0.0, weight_decay=0.0)
    np.testing.assert_allclose(p.value.data, [0.95, 2.05])


def test_sgd_zero_grad_is_fixed_point():
    p = _param([3.0])
    p.grad = np.zeros(1)
    sgd_step([p], {}, lr=0.1, momentum=0.0, weight_decay=0.0)
    np.testing.assert_allclose(p.value.data, [3.0])


def test_sgd_momentum_matches_scalar_recurrence():
    history = scalar_sgd_updates(grad=1.0, lr=0.1, momentum=0.9,
                                 weight_decay=0.0, w0=0.0, steps=3)
    p = _param([0.0])
    velocity = {}
    got = []
    for _ in range(3):
        p.grad = np.ones(1)
        sgd_step([p], velocity, lr=0.1, momentum=0.9, weight_decay=0.0)
        got.append(float(p.value.data[0]))
    np.testing.assert_allclose(got, history, rtol=1e-12)
    # second step's effective update is lr * 1.9 * g
    assert got[1] - got[0] == pytest.approx(-0.1 * 1.9, rel=1e-12)


def test_sgd_quadratic_contraction():
    # grad of 0.5*||w||^2 is w: one step scales w by (1 - lr) exactly
    p = _param([2.0, -4.0, 8.0])
    p.grad = p.value.data.copy()
    sgd_step([p], {}, lr=0.25, momentum=0.0, weight_decay=0.0)
    np.testing.assert_allclose(p.value.data, np.array([2.0, -4.0, 8.0]) * 0.75,
                               rtol=0, atol=0)


def test_sgd_weight_decay_enters_velocity():
    p = _param([1.0])
    p.grad = np.zeros(1)
    sgd_step([p], {}, lr=0.1, momentum=0.0, weight_decay=0.5)
    np.testing.assert_allclose(p.value.data, [1.0 - 0.1 * 0.5])


def test_sgd_nonfinite_grad_raises():
    p = _param([1.0])
    p.grad = np.array([np.inf])
    with pytest.raises(TrainingDivergedError):
        sgd_step([p], {}, lr=0.1, momentum=0.0, weight_decay=0.0)


# ---------------------------------------------------------------------------
# evaluation and curve queries

class _FixedModel:
    """Stands in for a Model: returns canned logits per batch."""

    def __init__(self, logits):
        self.logits = np.asarray(logits, np.float32)

    def forward(self, batch, mode):
        n = batch.shape[0] if hasattr(batch, "shape") else len(batch.value.data)
        out = self.logits[:n]
        self.logits = self.logits[n:]
        return Variable(Tensor(out))


def _dataset(labels, size=8):
    from padlab.data import LabeledImage
    return [LabeledImage(Tensor(np.zeros((3, size, size), np.float32)), l)
            for l in labels]


def test_evaluate_perfect_classifier():
    ds = _dataset([0, 1, 2])
    logits = np.eye(3, dtype=np.float32) * 5
    assert evaluate(_FixedModel(logits), ds) == 100.0


def test_evaluate_tie_breaks_to_lowest_class():
    ds = _dataset([0, 1, 0, 2])
    logits = np.zeros((4, 3), np.float32)  # all ties -> argmax picks class 0
    assert evaluate(_FixedModel(logits), ds) == 50.0


def test_evaluate_three_of_five():
    ds = _dataset([0, 0, 0, 1, 1])
    logits = np.array([[9, 0], [9, 0], [9, 0], [9, 0], [9, 0]], np.float32)
    assert evaluate(_FixedModel(logits), ds) == 60.0


def test_evaluate_empty_dataset_rejected():
    with pytest.raises(ConfigError):
        evaluate(_FixedModel(np.zeros((1, 2))), [])


def _log_from_curve(curve):
    log = RunLog("fixture", 0)
    for e, v in enumerate(curve):
        log.records.append(EpochRecord(e, 0.0, v, 0.1, 0.0))
    return log


def test_best_epoch_argmax_rule():
    log = _log_from_curve([70.1, 70.5, 70.3])
    assert log.best_epoch() == 1
    assert log.best_top1() == 70.5
    # ties keep the earliest epoch
    log = _log_from_curve([70.5, 70.5, 70.1])
    assert log.best_epoch() == 0


def test_epochs_to_threshold_fixture_curve():
    # synthetic curve first crossing 75.75 at epoch 73
    curve = [40 + 35.7 * e / 72 for e in range(73)] + [75.75, 75.9, 75.8]
    assert max(curve[:73]) < 75.75
    log = _log_from_curve(curve)
    assert epochs_to_threshold(log, 75.75) == 73
    assert epochs_to_threshold(log, 99.0) is None
    assert epochs_to_threshold(log, 0.0) == 0


# ---------------------------------------------------------------------------
# runs

def _small_setup(n=400, seed=5):
    images = gen_border_task(n, 32, Rng(seed))
    return split_train_val(images, 0.25)


def test_split_fractions():
    train, val = _small_setup(n=100)
    assert len(train) == 75 and len(val) == 25
    with pytest.raises(ConfigError):
        split_train_val([1, 2, 3], 1.5)


def test_train_run_rejects_empty_validation_set():
    train, _ = _small_setup(n=80)
    spec = ModelSpec("tinyvgg", num_classes=2, input_size=32)
    with pytest.raises(ConfigError):
        train_run(spec, TrainConfig(epochs=1), train, [], seed=0)


def test_train_run_deterministic(tmp_path):
    train, val = _small_setup()
    spec = ModelSpec("tinyvgg", num_classes=2, input_size=32)
    cfg = TrainConfig(base_lr=0.02, epochs=2, batch_size=64)
    log1, best1, _ = train_run(spec, cfg, train, val, seed=1)
    log2, best2, _ = train_run(spec, cfg, train, val, seed=1)
    strip = lambda log: [(r.epoch, r.train_loss, r.val_top1, r.lr)
                         for r in log.records]
    assert strip(log1) == strip(log2)
    assert best1.epoch == best2.epoch
    for k in best1.tensors:
        assert best1.tensors[k].tobytes() == best2.tensors[k].tobytes()
    # different seed -> different trajectory
    log3, _, _ = train_run(spec, cfg, train, val, seed=2)
    assert strip(log1) != strip(log3)


def test_checkpoint_roundtrip_reproduces_top1(tmp_path):
    train, val = _small_setup()
    spec = ModelSpec("tinyresnet", num_classes=2, input_size=32)
    cfg = TrainConfig(base_lr=0.02, epochs=2, batch_size=64)
    log, best, _ = train_run(spec, cfg, train, val, seed=3)
    path = tmp_path / "best.ckpt"
    best.save(path)
    loaded = Checkpoint.load(path)
    assert loaded.epoch == best.epoch
    assert loaded.val_top1 == best.val_top1
    fresh = build_model(spec, Rng(0))
    loaded.apply_to(fresh)
    assert evaluate(fresh, val) == best.val_top1
    # byte-exact round trip of the file itself
    path2 = tmp_path / "again.ckpt"
    loaded.save(path2)
    assert path.read_bytes() == path2.read_bytes()


def test_runlog_csv_roundtrip():
    train, val = _small_setup(n=120)
    spec = ModelSpec("tinyvgg", num_classes=2, input_size=32)
    cfg = TrainConfig(base_lr=0.02, epochs=2, batch_size=32)
    log, _, _ = train_run(spec, cfg, train, val, seed=7)
    text = log.to_csv()
    back = RunLog.from_csv(text)
    assert back.spec_id == log.spec_id and back.seed == 7
    assert [r.val_top1 for r in back.records] == [r.val_top1 for r in log.records]
    assert [r.train_loss for r in back.records] == [r.train_loss for r in log.records]
    assert [r.epoch for r in back.records] == [0, 1]


def test_divergence_preserves_partial_log():
    train, val = _small_setup(n=200)
    spec = ModelSpec("tinyvgg", num_classes=2, input_size=32)
    cfg = TrainConfig(base_lr=1e18, epochs=3, batch_size=64, weight_decay=0.0)
    with np.errstate(all="ignore"):
        with pytest.raises(TrainingDivergedError) as info:
            train_run(spec, cfg, train, val, seed=0)
    assert hasattr(info.value, "runlog")


def test_early_stop_caps_epochs():
    train, val = _small_setup()
    spec = ModelSpec("tinyresnet", num_classes=2, input_size=32)
    cfg = TrainConfig(base_lr=0.02, epochs=15, batch_size=64, early_stop_top1=90.0)
    log, best, _ = train_run(spec, cfg, train, val, seed=0)
    assert len(log.records) <= 15
    assert [r.epoch for r in log.records] == list(range(len(log.records)))
    if best.val_top1 >= 90.0:
        assert log.records[-1].val_top1 >= 90.0
