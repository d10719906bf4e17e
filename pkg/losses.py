"""
损失函数模块
每个函数返回 (标量损失, 对预测的梯度)
"""
from typing import Tuple

import numpy as np

from errors import InvalidArgumentError

PROB_EPS = 1e-9


def _check_shapes(pred: np.ndarray, target: np.ndarray, name: str):
    if pred.shape != target.shape:
        raise InvalidArgumentError(f"{name}: 预测形状 {pred.shape} 与标签形状 {target.shape} 不符")
    if pred.ndim != 2 or pred.shape[0] == 0:
        raise InvalidArgumentError(f"{name}: 需要非空的 B x K 批次: {pred.shape}")


def cross_entropy_loss(probs: np.ndarray, onehot: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    分类交叉熵（输入为 softmax 之后的概率）

    loss = mean_b( -sum_k y_bk * log(max(p_bk, eps)) )

    Args:
        probs: B x K 概率
        onehot: B x K one-hot 标签

    Returns:
        (loss, dL/dprobs)
    """
    probs = np.asarray(probs)
    onehot = np.asarray(onehot)
    _check_shapes(probs, onehot, "cross_entropy_loss")
    batch = probs.shape[0]
    clipped = np.maximum(probs, PROB_EPS)
    loss = float(-np.sum(onehot * np.log(clipped)) / batch)
    grad = np.where(probs > PROB_EPS, -onehot / clipped, 0.0) / batch
    return loss, grad.astype(probs.dtype, copy=False)


def sse_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    平方误差和，按批取平均：mean_b( sum_k (pred - target)^2 )

    Returns:
        (loss, 2 * (pred - target) / B)
    """
    pred = np.asarray(pred)
    target = np.asarray(target)
    _check_shapes(pred, target, "sse_loss")
    batch = pred.shape[0]
    diff = pred - target
    loss = float(np.sum(diff * diff) / batch)
    return loss, (2.0 * diff / batch).astype(pred.dtype, copy=False)
