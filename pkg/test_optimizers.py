"""
优化器测试
"""
import numpy as np
import pytest

from errors import InvalidArgumentError, NonFiniteValueError
from nn_layers import Tensor
from optimizers import Optimizer, OptimizerHyper, OptimizerState, optimizer_step


def test_sgd_single_step():
    p = np.zeros(3)
    optimizer_step([p], [np.ones(3)], OptimizerState(), OptimizerHyper("sgd", lr=0.1))
    np.testing.assert_allclose(p, -0.1)


def test_sgd_zero_gradient_keeps_params(rng):
    p = rng.normal(size=(2, 2))
    before = p.copy()
    optimizer_step([p], [np.zeros_like(p)], OptimizerState(), OptimizerHyper("sgd", lr=0.1))
    np.testing.assert_array_equal(p, before)


def test_sgd_momentum_accumulates():
    p = np.zeros(1)
    state = OptimizerState()
    hyper = OptimizerHyper("sgd", lr=0.1, momentum=0.9)
    optimizer_step([p], [np.ones(1)], state, hyper)
    optimizer_step([p], [np.ones(1)], state, hyper)
    # 第二步速度为 0.9 + 1
    np.testing.assert_allclose(p, -0.1 - 0.19)


def test_adam_first_step_is_lr():
    p = np.zeros(4)
    optimizer_step([p], [np.ones(4)], OptimizerState(), OptimizerHyper("adam", lr=1e-3))
    np.testing.assert_allclose(p, -1e-3, rtol=1e-6)


def test_non_finite_gradient_raises():
    p = np.zeros(2)
    with pytest.raises(NonFiniteValueError):
        optimizer_step([p], [np.array([1.0, np.nan])], OptimizerState(), OptimizerHyper())
    np.testing.assert_array_equal(p, 0.0)


def test_shape_mismatch_and_bad_hyper():
    with pytest.raises(InvalidArgumentError):
        optimizer_step([np.zeros(2)], [np.zeros(3)], OptimizerState(), OptimizerHyper())
    with pytest.raises(InvalidArgumentError):
        OptimizerHyper("rmsprop")
    with pytest.raises(InvalidArgumentError):
        OptimizerHyper(lr=-1.0)


def test_optimizer_wraps_tensors():
    t = Tensor(np.ones(3, dtype=np.float32))
    opt = Optimizer([t], OptimizerHyper("sgd", lr=0.5))
    t.grad[...] = 2.0
    opt.step()
    np.testing.assert_allclose(t.data, 0.0)
    opt.zero_grad()
    np.testing.assert_array_equal(t.grad, 0.0)
    assert opt.state.step == 1
