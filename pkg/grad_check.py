"""
梯度检查模块
用中心差分核对反向传播得到的参数梯度
"""
import logging
from typing import Callable, Optional, Tuple

import numpy as np

from losses import cross_entropy_loss, sse_loss
from nn_layers import ModelGraph, Softmax

logger = logging.getLogger(__name__)

LossFn = Callable[[np.ndarray, np.ndarray], Tuple[float, np.ndarray]]


def _same_signature(a, b) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def grad_check(model: ModelGraph, x: np.ndarray, label: np.ndarray, eps: float = 1e-3,
               num_samples: int = 200, seed: int = 0, loss_fn: Optional[LossFn] = None) -> float:
    """
    在随机抽取的参数上比较解析梯度与数值梯度

    在模型的 float64 副本上进行，原模型不变。扰动使某个 ReLU 符号或池化
    argmax 发生变化的样本落在不可导点附近，跳过不计。

    Args:
        model: 待检查的网络
        x: 输入批次
        label: 标签
        eps: 中心差分步长
        num_samples: 抽样参数个数（参数总数更少时取全部）
        seed: 抽样种子
        loss_fn: 损失函数，默认最后一层为 softmax 时用交叉熵，否则用 SSE

    Returns:
        最大相对误差 |a - n| / max(|a|, |n|, 1e-8)
    """
    graph = model.copy().to_dtype(np.float64)
    x = np.asarray(x, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    if loss_fn is None:
        loss_fn = cross_entropy_loss if isinstance(graph.layers[-1], Softmax) else sse_loss

    def loss_at() -> Tuple[float, list]:
        value = loss_fn(graph.forward(x), label)[0]
        return value, graph.kink_signature()

    graph.zero_grad()
    _, dout = loss_fn(graph.forward(x), label)
    base_signature = graph.kink_signature()
    graph.backward(dout)

    params = graph.parameters()
    sizes = np.array([p.size for p in params])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(seed)
    order = rng.permutation(int(offsets[-1]))

    worst = 0.0
    checked = skipped = 0
    for flat in order:
        if checked >= num_samples:
            break
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        index = int(flat - offsets[k])
        tensor = params[k]
        original = tensor.data.flat[index]

        tensor.data.flat[index] = original + eps
        plus, sig_plus = loss_at()
        tensor.data.flat[index] = original - eps
        minus, sig_minus = loss_at()
        tensor.data.flat[index] = original

        if not (_same_signature(sig_plus, base_signature) and _same_signature(sig_minus, base_signature)):
            skipped += 1
            continue

        numeric = (plus - minus) / (2.0 * eps)
        analytic = float(tensor.grad.flat[index])
        error = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, error)
        checked += 1

    if checked == 0:
        logger.warning("梯度检查没有可用样本（全部落在不可导点附近）")
    logger.info(f"梯度检查: 检查 {checked} 个参数，跳过 {skipped} 个，最大相对误差 {worst:.3e}")
    return worst
