"""
优化器模块
SGD（带动量）与 Adam，参数原地更新
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from errors import InvalidArgumentError, NonFiniteValueError
from nn_layers import Tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerHyper:
    """优化器超参数"""
    kind: str = "adam"  # adam / sgd
    lr: float = 1e-3
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise InvalidArgumentError(f"未知优化器: {self.kind}")
        if self.lr < 0:
            raise InvalidArgumentError(f"学习率不能为负: {self.lr}")


@dataclass
class OptimizerState:
    """优化器状态：步数与每个参数的动量缓冲"""
    step: int = 0
    slots: Dict[int, Tuple[np.ndarray, ...]] = field(default_factory=dict)


def optimizer_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
                   state: OptimizerState, hyper: OptimizerHyper) -> None:
    """
    执行一步更新

    Args:
        params: 参数数组（原地修改）
        grads: 与 params 一一对应的梯度
        state: 优化器状态（原地修改）
        hyper: 超参数

    Raises:
        NonFiniteValueError: 梯度中出现 NaN/Inf
    """
    if len(params) != len(grads):
        raise InvalidArgumentError(f"参数数 {len(params)} 与梯度数 {len(grads)} 不符")
    for k, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise InvalidArgumentError(f"第 {k} 个参数形状 {p.shape} 与梯度形状 {g.shape} 不符")
        if not np.all(np.isfinite(g)):
            logger.error(f"第 {k} 个参数的梯度出现非有限值，训练中止")
            raise NonFiniteValueError(f"第 {k} 个参数的梯度出现非有限值")

    state.step += 1
    if hyper.kind == "sgd":
        for k, (p, g) in enumerate(zip(params, grads)):
            if hyper.momentum == 0:
                p -= hyper.lr * g
                continue
            (velocity,) = state.slots.get(k, (np.zeros_like(p),))
            velocity = hyper.momentum * velocity + g
            state.slots[k] = (velocity,)
            p -= hyper.lr * velocity
    else:
        b1, b2 = hyper.beta1, hyper.beta2
        c1 = 1.0 - b1 ** state.step
        c2 = 1.0 - b2 ** state.step
        for k, (p, g) in enumerate(zip(params, grads)):
            m, v = state.slots.get(k, (np.zeros_like(p), np.zeros_like(p)))
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            state.slots[k] = (m, v)
            p -= hyper.lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)


class Optimizer:
    """绑定到一组参数张量的优化器"""

    def __init__(self, parameters: List[Tensor], hyper: OptimizerHyper):
        self.parameters = list(parameters)
        self.hyper = hyper
        self.state = OptimizerState()

    def step(self):
        optimizer_step([p.data for p in self.parameters], [p.grad for p in self.parameters],
                       self.state, self.hyper)

    def zero_grad(self):
        for p in self.parameters:
            p.zero_grad()
