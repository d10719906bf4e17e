"""
评估指标测试
"""
import csv

import numpy as np
import pytest

from chain import ChainConfig, padded_length_label
from errors import InvalidArgumentError
from metrics import (accuracy, confusion, length_error, mean_length_error, mean_normalized_length_error,
                     pad_prediction)


def test_accuracy():
    assert accuracy([1, 2, 3], [1, 2, 4]) == pytest.approx(2 / 3)
    assert accuracy([6, 6], [6, 6]) == 1.0
    assert accuracy([1, 1], [2, 3]) == 0.0
    with pytest.raises(InvalidArgumentError):
        accuracy([], [])
    with pytest.raises(InvalidArgumentError):
        accuracy([1, 2], [1])


def test_confusion_single_count():
    matrix = confusion([5], [2])
    assert matrix.counts[1][4] == 1
    assert matrix.total == 1
    assert matrix.trace() == 0


def test_confusion_matches_brute_force(rng):
    preds = rng.integers(1, 7, size=300)
    truths = rng.integers(1, 7, size=300)
    matrix = confusion(preds, truths)
    for i in range(6):
        for j in range(6):
            expected = sum(1 for p, t in zip(preds, truths) if t == i + 1 and p == j + 1)
            assert matrix.counts[i, j] == expected
    assert matrix.total == 300
    assert matrix.accuracy() == pytest.approx(accuracy(preds, truths))


def test_confusion_rejects_out_of_range():
    with pytest.raises(InvalidArgumentError):
        confusion([0, 1], [1, 1])
    with pytest.raises(InvalidArgumentError):
        confusion([1, 7], [1, 1])
    with pytest.raises(InvalidArgumentError):
        confusion([], [])


def test_length_error_examples():
    truth = np.array([1.5, 0.5, 0.5, 0, 0, 0, 0])
    pred = np.array([1.5, 0.3, 0.5, 0.4, 0, 0, 0])
    assert length_error(truth, pred) == pytest.approx(0.2)
    assert length_error(pred, truth) == pytest.approx(0.2)

    # 计数多估一个连杆时，多出的那一项计入误差
    cfg = ChainConfig(n=2, lengths=(1.5, 0.5, 0.5), colors=("red", "blue", "green"))
    padded = pad_prediction([1.5, 0.5, 0.5, 0.3, 9.0], 3)
    assert length_error(padded_length_label(cfg), padded) == pytest.approx(0.09)


def test_length_error_normalized_and_shapes():
    truth = np.array([2.0, 1.0, 0, 0, 0, 0, 0])
    pred = np.array([2.0, 0.0, 0, 0, 0, 0, 0])
    assert length_error(truth, pred, normalize_by_base=True) == pytest.approx(0.5)
    with pytest.raises(InvalidArgumentError):
        length_error(truth[:3], pred[:3])
    with pytest.raises(InvalidArgumentError):
        length_error(np.zeros(7), pred, normalize_by_base=True)


def test_mean_normalized_length_error():
    truths = np.array([[2.0, 1.0, 0, 0, 0, 0, 0], [0.5, 1.0, 0, 0, 0, 0, 0]])
    preds = np.array([[2.0, 0.0, 0, 0, 0, 0, 0], [0.5, 0.0, 0, 0, 0, 0, 0]])
    assert mean_normalized_length_error(truths, preds) == pytest.approx((0.5 + 2.0) / 2)
    assert mean_length_error(truths, preds) == pytest.approx(1.0)
    with pytest.raises(InvalidArgumentError):
        mean_normalized_length_error(truths, preds[:1])


def test_mean_length_error(rng):
    t = rng.uniform(size=(5, 7))
    p = rng.uniform(size=(5, 7))
    expected = np.mean([length_error(a, b) for a, b in zip(t, p)])
    assert mean_length_error(t, p) == pytest.approx(expected)
    with pytest.raises(InvalidArgumentError):
        mean_length_error(t, p[:4])


def test_pad_prediction():
    np.testing.assert_array_equal(pad_prediction([1.0, 2.0, 3.0], 2), [1, 2, 3, 0, 0, 0, 0])
    assert len(pad_prediction(np.ones(7), 6)) == 7
    with pytest.raises(InvalidArgumentError):
        pad_prediction([1.0, 2.0], 2)
    with pytest.raises(InvalidArgumentError):
        pad_prediction([1.0] * 8, 7)


def test_confusion_exports(tmp_path):
    matrix = confusion([1, 1, 2, 6], [1, 2, 2, 6])
    normalized = matrix.row_normalized()
    np.testing.assert_allclose(normalized[1], [0.5, 0.5, 0, 0, 0, 0])
    np.testing.assert_array_equal(normalized[3], 0.0)

    image = matrix.heatmap(cell=4)
    assert image.shape == (24, 24) and image.dtype == np.uint8
    assert image[0, 0] == 255 and image[4, 4] == 128

    with open(matrix.to_csv(tmp_path / "cm.csv"), newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0][1:] == ["1", "2", "3", "4", "5", "6"]
    assert rows[2] == ["2", "1", "1", "0", "0", "0", "0"]
