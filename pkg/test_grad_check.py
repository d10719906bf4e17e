"""
梯度检查测试：每种层的反向传播与中心差分一致
"""
import numpy as np
import pytest

from grad_check import grad_check
from nn_layers import (LSTM, Conv2D, Conv3D, Dense, Flatten, Linear, MaxPool, ModelGraph, ReLU, Softmax,
                       TimeDistributed)


def _onehot(rng, batch, classes=6):
    return np.eye(classes)[rng.integers(0, classes, size=batch)]


def test_tiny_conv3d_counter(rng):
    layers = [Conv3D(3), ReLU(), MaxPool((2, 2, 2)), Flatten(), Dense(6, "lecun"), Softmax()]
    graph = ModelGraph(layers, (4, 6, 8, 1), seed=0)
    x = rng.uniform(0, 1, size=(2, 4, 6, 8, 1))
    assert grad_check(graph, x, _onehot(rng, 2), eps=1e-3) <= 1e-4


def test_linear_model_is_exact(rng):
    graph = ModelGraph([Flatten(), Dense(3, "lecun"), Linear()], (2, 5), seed=1)
    x = rng.normal(size=(4, 2, 5))
    assert grad_check(graph, x, rng.normal(size=(4, 3))) <= 1e-7


def test_relu_away_from_kinks(rng):
    graph = ModelGraph([Flatten(), Dense(8), ReLU(), Dense(3, "lecun"), Linear()], (6,), seed=2)
    x = rng.normal(size=(3, 6))
    assert grad_check(graph, x, rng.normal(size=(3, 3))) <= 1e-5


def test_original_model_untouched(rng):
    graph = ModelGraph([Flatten(), Dense(3, "lecun"), Linear()], (4,), seed=3)
    before = [p.data.copy() for p in graph.parameters()]
    grad_check(graph, rng.normal(size=(2, 4)), rng.normal(size=(2, 3)))
    for p, b in zip(graph.parameters(), before):
        assert p.data.dtype == np.float32
        np.testing.assert_array_equal(p.data, b)


def _layer_cases():
    return {
        "conv3d": ([Conv3D(2, (2, 3, 3)), ReLU(), Flatten(), Dense(3, "lecun"), Linear()], (3, 4, 4, 2), 3),
        "conv2d_pool": ([Conv2D(3), ReLU(), MaxPool((2, 2)), Flatten(), Dense(4, "lecun"), Linear()], (5, 6, 1), 4),
        "dense_softmax": ([Flatten(), Dense(5), ReLU(), Dense(6, "lecun"), Softmax()], (7,), 6),
        "lstm": ([LSTM(hidden=4), Dense(3, "lecun"), Linear()], (5, 3), 3),
        "time_distributed": ([TimeDistributed([Conv2D(2), ReLU(), Flatten(), Dense(3)]), LSTM(hidden=3),
                              Dense(6, "lecun"), Softmax()], (3, 4, 4, 1), 6),
    }


@pytest.mark.slow
@pytest.mark.parametrize("case", sorted(_layer_cases()))
@pytest.mark.parametrize("seed", range(20))
def test_layer_backward_across_seeds(case, seed):
    layers, shape, outputs = _layer_cases()[case]
    graph = ModelGraph(layers, shape, seed=seed)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2,) + shape)
    label = _onehot(rng, 2) if outputs == 6 else rng.normal(size=(2, outputs))
    assert grad_check(graph, x, label, eps=1e-4, seed=seed) <= 1e-4
