"""
训练流程测试
"""
import csv

import numpy as np
import pytest

from config import TrainConfig
from dataset import StackDataset
from errors import InvalidArgumentError, NonFiniteValueError
from models import build_counter_conv3d, build_end_to_end, build_length_regressor
from trainer import Trainer, align_depth_scale, evaluate, train

SHAPE = (2, 4, 4, 1)


class ArrayDataset:
    """内存中的 inputs/targets，批次划分与 StackDataset 相同"""

    def __init__(self, inputs, targets):
        self.inputs = np.asarray(inputs, dtype=np.float32)
        self.targets = np.asarray(targets, dtype=np.float32)

    def __len__(self):
        return len(self.inputs)

    def batches(self, batch_size, rng=None):
        order = np.arange(len(self)) if rng is None else rng.permutation(len(self))
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            yield self.inputs[idx], self.targets[idx]


def _count_data(rng, size=12):
    labels = rng.integers(0, 6, size=size)
    return ArrayDataset(rng.uniform(0, 10, size=(size,) + SHAPE), np.eye(6)[labels])


def test_zero_lr_keeps_parameters(rng):
    model = build_counter_conv3d(SHAPE, seed=2)
    before = [p.data.copy() for p in model.graph.parameters()]
    result = train(model, _count_data(rng), TrainConfig(epochs=3, lr=0.0, batch_size=4))
    for old, new in zip(before, model.graph.parameters()):
        np.testing.assert_array_equal(old, new.data)
    losses = result.history.losses
    assert losses == pytest.approx([losses[0]] * 3, rel=1e-6)


def test_same_seed_same_history(rng):
    data = _count_data(rng)
    cfg = TrainConfig(epochs=2, batch_size=5, seed=3)
    a = train(build_counter_conv3d(SHAPE, seed=1), data, cfg).history.losses
    b = train(build_counter_conv3d(SHAPE, seed=1), data, cfg).history.losses
    assert a == b


def test_non_deterministic_shuffle_differs(rng):
    data = _count_data(rng)
    cfg = TrainConfig(epochs=2, batch_size=5, seed=3, deterministic=False)
    a = train(build_counter_conv3d(SHAPE, seed=1), data, cfg).history.losses
    b = train(build_counter_conv3d(SHAPE, seed=1), data, cfg).history.losses
    assert a != b


def test_history_csv(tmp_path, rng):
    data = _count_data(rng)
    result = train(build_counter_conv3d(SHAPE, seed=1), data, TrainConfig(epochs=3, batch_size=6),
                   val_dataset=data)
    path = result.history.to_csv(tmp_path / "history.csv")
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert [r["epoch"] for r in rows] == ["1", "2", "3"]
    assert all(0.0 <= float(r["val_metric"]) <= 1.0 for r in rows)


def test_nan_input_raises(rng):
    data = _count_data(rng, size=4)
    data.inputs[1, 0, 0, 0, 0] = np.nan
    with pytest.raises(NonFiniteValueError):
        train(build_counter_conv3d(SHAPE, seed=0), data, TrainConfig(epochs=1, batch_size=4))


def test_dataset_validation(rng):
    model = build_length_regressor(2, SHAPE, seed=0)
    wrong_dim = ArrayDataset(rng.uniform(size=(4,) + SHAPE), np.ones((4, 7)))
    with pytest.raises(InvalidArgumentError):
        train(model, wrong_dim, TrainConfig(epochs=1))
    wrong_shape = ArrayDataset(rng.uniform(size=(4, 3, 4, 4, 1)), np.ones((4, 3)))
    with pytest.raises(InvalidArgumentError):
        train(model, wrong_shape, TrainConfig(epochs=1))
    with pytest.raises(InvalidArgumentError):
        train(model, ArrayDataset(np.zeros((0,) + SHAPE), np.zeros((0, 3))), TrainConfig(epochs=1))


def test_depth_input_scale(rng):
    model = build_end_to_end(SHAPE, seed=0)
    data = ArrayDataset(rng.uniform(0, 10, size=(3,) + SHAPE), rng.uniform(0, 1, size=(3, 7)))
    train(model, data, TrainConfig(epochs=1, depth_scale=10.0))
    assert model.input_scale == pytest.approx(0.1)

    gray = build_end_to_end(SHAPE, modality="gray", seed=0)
    train(gray, data, TrainConfig(epochs=1))
    assert gray.input_scale == 1.0


def test_align_depth_scale(caplog):
    cfg = TrainConfig(depth_scale=10.0)
    assert align_depth_scale(cfg, 10.0) is cfg
    assert align_depth_scale(cfg, None) is cfg
    with caplog.at_level("WARNING", logger="trainer"):
        aligned = align_depth_scale(cfg, 25.0)
    assert aligned.depth_scale == 25.0 and aligned.epochs == cfg.epochs
    assert "far=25.0" in caplog.text


def test_progress_callback(rng):
    seen = []
    Trainer(TrainConfig(epochs=2, batch_size=4), progress_callback=lambda m, p: seen.append(p)).fit(
        build_counter_conv3d(SHAPE, seed=0), _count_data(rng))
    assert seen == [0, 50, 100]


def test_evaluate_metrics(rng):
    data = ArrayDataset(rng.uniform(size=(5,) + SHAPE), np.zeros((5, 7)))
    model = build_end_to_end(SHAPE, seed=0)
    assert evaluate(model, data) >= 0.0
    with pytest.raises(InvalidArgumentError):
        evaluate(model, ArrayDataset(np.zeros((0,) + SHAPE), np.zeros((0, 7))))


@pytest.mark.slow
def test_counter_overfits_small_set(tiny_dataset):
    root, manifest = tiny_dataset
    full = StackDataset(root, manifest, "train", mode="multiview", modality="depth", timestep_stride=1)
    data = ArrayDataset(full.inputs[:20], full.targets[:20])
    assert len(data) == 20
    model = build_counter_conv3d(data.inputs.shape[1:], seed=0)
    result = train(model, data, TrainConfig(epochs=200, batch_size=4, lr=3e-3))
    assert result.history.losses[-1] < result.history.losses[0]
    assert evaluate(model, data) == 1.0


@pytest.mark.slow
def test_regressor_overfits_single_count(tiny_dataset):
    root, manifest = tiny_dataset
    data = StackDataset(root, manifest, "train", mode="multiview", modality="depth",
                        label_kind="lengths", only_n=1, timestep_stride=1)
    model = build_length_regressor(1, data.inputs.shape[1:], seed=0)
    train(model, data, TrainConfig(epochs=200, batch_size=2, lr=3e-3))
    assert evaluate(model, data) < 1e-2
