"""
评估指标模块
准确率、混淆矩阵、长度误差与补零规则
"""
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from errors import InvalidArgumentError

logger = logging.getLogger(__name__)

NUM_CLASSES = 6
LABEL_WIDTH = NUM_CLASSES + 1


def _as_int_list(values: Sequence[int], name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise InvalidArgumentError(f"{name} 必须是一维序列: {arr.shape}")
    return arr.astype(np.int64)


def accuracy(preds: Sequence[int], truths: Sequence[int]) -> float:
    """
    预测完全正确的比例

    Args:
        preds: 预测类别
        truths: 真实类别
    """
    p = _as_int_list(preds, "preds")
    t = _as_int_list(truths, "truths")
    if len(p) == 0:
        raise InvalidArgumentError("accuracy 需要非空输入")
    if len(p) != len(t):
        raise InvalidArgumentError(f"预测数 {len(p)} 与真值数 {len(t)} 不符")
    return float(np.count_nonzero(p == t)) / len(p)


@dataclass
class ConfusionMatrix:
    """6x6 混淆矩阵，行为真实 n，列为预测 n"""
    counts: np.ndarray = field(default_factory=lambda: np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def trace(self) -> int:
        return int(np.trace(self.counts))

    def accuracy(self) -> float:
        if self.total == 0:
            raise InvalidArgumentError("空混淆矩阵没有准确率")
        return self.trace() / self.total

    def row_normalized(self) -> np.ndarray:
        """按行归一化，空行保持为 0"""
        rows = self.counts.sum(axis=1, keepdims=True).astype(np.float64)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    def to_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f)
            writer.writerow(["truth\\pred"] + [str(k) for k in range(1, NUM_CLASSES + 1)])
            for k, row in enumerate(self.counts, start=1):
                writer.writerow([str(k)] + [str(int(v)) for v in row])
        return path

    def heatmap(self, cell: int = 16) -> np.ndarray:
        """行归一化热力图（0-255），每个格子放大为 cell x cell 像素"""
        image = np.round(self.row_normalized() * 255).astype(np.uint8)
        return np.kron(image, np.ones((cell, cell), dtype=np.uint8))


def confusion(preds: Sequence[int], truths: Sequence[int]) -> ConfusionMatrix:
    """
    统计混淆矩阵

    Raises:
        InvalidArgumentError: 为空、长度不符或类别超出 1..6
    """
    p = _as_int_list(preds, "preds")
    t = _as_int_list(truths, "truths")
    if len(p) == 0 or len(p) != len(t):
        raise InvalidArgumentError(f"confusion 需要等长的非空输入: {len(p)} vs {len(t)}")
    for name, arr in (("preds", p), ("truths", t)):
        if arr.min() < 1 or arr.max() > NUM_CLASSES:
            raise InvalidArgumentError(f"{name} 中存在超出 1..{NUM_CLASSES} 的类别")
    matrix = ConfusionMatrix()
    np.add.at(matrix.counts, (t - 1, p - 1), 1)
    return matrix


def pad_prediction(lengths: Sequence[float], n_hat: int) -> np.ndarray:
    """
    把回归输出扩展为 7 维：前 n_hat+1 项取预测值，其余为 0

    Args:
        lengths: 至少 n_hat+1 个预测长度
        n_hat: 预测的活动连杆数
    """
    if not 1 <= n_hat <= NUM_CLASSES:
        raise InvalidArgumentError(f"n_hat 必须在 1..{NUM_CLASSES}: {n_hat}")
    values = np.asarray(lengths, dtype=np.float64).ravel()
    if len(values) < n_hat + 1:
        raise InvalidArgumentError(f"需要 {n_hat + 1} 个长度，只有 {len(values)} 个")
    padded = np.zeros(LABEL_WIDTH)
    padded[:n_hat + 1] = values[:n_hat + 1]
    return padded


def length_error(truth, pred: Sequence[float], normalize_by_base: bool = False) -> float:
    """
    补零长度向量之间的平方误差和 E_L

    Args:
        truth: LengthLabel 或 7 维数组
        pred: 7 维预测
        normalize_by_base: 为 True 时除以真实基座长度（尺度不可辨的单视角灰度场景）
    """
    t = np.asarray(getattr(truth, "padded", truth), dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    if t.shape != (LABEL_WIDTH,) or p.shape != (LABEL_WIDTH,):
        raise InvalidArgumentError(f"length_error 需要两个 {LABEL_WIDTH} 维向量: {t.shape} vs {p.shape}")
    diff = t - p
    error = float(np.sum(diff * diff))
    if normalize_by_base:
        if t[0] <= 0:
            raise InvalidArgumentError("基座长度必须为正才能归一化")
        error /= t[0]
    return error


def mean_length_error(truths: np.ndarray, preds: np.ndarray) -> float:
    """批量 E_L 的平均值（B x 7）"""
    t = np.asarray(truths, dtype=np.float64)
    p = np.asarray(preds, dtype=np.float64)
    if t.shape != p.shape or t.ndim != 2 or len(t) == 0:
        raise InvalidArgumentError(f"mean_length_error 需要等形状的非空 B x K 数组: {t.shape} vs {p.shape}")
    return float(np.mean(np.sum((t - p) ** 2, axis=1)))


def mean_normalized_length_error(truths: np.ndarray, preds: np.ndarray) -> float:
    """按真实基座长度归一化的批量 E_L 平均值"""
    t = np.asarray(truths, dtype=np.float64)
    p = np.asarray(preds, dtype=np.float64)
    if t.shape != p.shape or t.ndim != 2 or len(t) == 0:
        raise InvalidArgumentError(f"mean_normalized_length_error 需要等形状的非空 B x K 数组: {t.shape} vs {p.shape}")
    return float(np.mean([length_error(a, b, normalize_by_base=True) for a, b in zip(t, p)]))
