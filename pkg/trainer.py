"""
训练流程
小批量梯度下降训练估计器，记录每轮损失与验证指标
"""
import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from config import TrainConfig
from errors import InvalidArgumentError, NonFiniteValueError
from losses import cross_entropy_loss, sse_loss
from metrics import accuracy, mean_length_error
from models import CounterModel, Estimator
from optimizers import Optimizer, OptimizerHyper

logger = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    """单轮记录"""
    epoch: int
    train_loss: float
    val_metric: Optional[float] = None  # 计数网络为准确率，其余为平均 E_L


@dataclass
class TrainHistory:
    """训练历史"""
    records: List[EpochRecord] = field(default_factory=list)

    @property
    def losses(self) -> List[float]:
        return [r.train_loss for r in self.records]

    def __len__(self):
        return len(self.records)

    def to_csv(self, path: Path) -> Path:
        """写出 epoch,train_loss,val_metric"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.DictWriter(f, fieldnames=["epoch", "train_loss", "val_metric"])
            writer.writeheader()
            for record in self.records:
                row = asdict(record)
                if row["val_metric"] is None:
                    row["val_metric"] = ""
                writer.writerow(row)
        logger.info(f"训练历史已保存: {path}")
        return path


@dataclass
class TrainResult:
    model: Estimator
    history: TrainHistory


def evaluate(model: Estimator, dataset, batch_size: int = 64) -> float:
    """
    在数据集上评估

    Returns:
        计数网络返回准确率，长度网络返回平均 E_L
    """
    if len(dataset) == 0:
        raise InvalidArgumentError("评估数据集为空")
    outputs = model.predict(dataset.inputs, batch_size)
    if isinstance(model, CounterModel):
        return accuracy(np.argmax(outputs, axis=1), np.argmax(dataset.targets, axis=1))
    return mean_length_error(dataset.targets, outputs)


class Trainer:
    """训练器"""

    def __init__(self, cfg: TrainConfig = TrainConfig(), progress_callback: Optional[Callable] = None):
        """
        Args:
            cfg: 训练参数
            progress_callback: 进度回调函数，签名为 (message: str, progress: int)
        """
        self.cfg = cfg
        self.progress_callback = progress_callback

    def _update_progress(self, message: str, progress: int):
        logger.info(f"[{progress}%] {message}")
        if self.progress_callback:
            self.progress_callback(message, progress)

    def _check_dataset(self, model: Estimator, dataset, name: str):
        if dataset is None or len(dataset) == 0:
            raise InvalidArgumentError(f"{name}数据集为空")
        if tuple(dataset.inputs.shape[1:]) != model.input_shape:
            raise InvalidArgumentError(
                f"{name}数据形状 {tuple(dataset.inputs.shape[1:])} 与网络输入 {model.input_shape} 不符"
            )
        if dataset.targets.ndim != 2 or dataset.targets.shape[1] != model.output_dim:
            raise InvalidArgumentError(
                f"{name}标签维数 {dataset.targets.shape[1:]} 与 {model.kind} 输出 {model.output_dim} 不符"
            )

    def fit(self, model: Estimator, dataset, val_dataset=None) -> TrainResult:
        """
        训练模型

        Args:
            model: 估计器（原地更新参数）
            dataset: 训练集，需提供 inputs/targets/batches()
            val_dataset: 验证集，可为 None

        Raises:
            NonFiniteValueError: 损失或梯度出现 NaN/Inf
        """
        cfg = self.cfg
        self._check_dataset(model, dataset, "训练")
        if val_dataset is not None and len(val_dataset) > 0:
            self._check_dataset(model, val_dataset, "验证")
        else:
            val_dataset = None

        if model.modality == "depth":
            model.input_scale = 1.0 / cfg.depth_scale
        loss_fn = cross_entropy_loss if isinstance(model, CounterModel) else sse_loss
        optimizer = Optimizer(model.graph.parameters(),
                              OptimizerHyper(kind=cfg.optimizer, lr=cfg.lr,
                                             momentum=cfg.momentum if cfg.optimizer == "sgd" else 0.0))
        # 非确定模式下打乱顺序取系统熵，初始化仍由 seed 决定
        rng = np.random.default_rng(cfg.seed if cfg.deterministic else None)
        if not cfg.deterministic:
            logger.info("非确定模式: 每轮批次顺序不可复现")
        history = TrainHistory()

        self._update_progress(f"开始训练 {model.kind} ({model.arch_name})，{len(dataset)} 个样本", 0)
        for epoch in range(1, cfg.epochs + 1):
            total, seen = 0.0, 0
            for x, y in dataset.batches(cfg.batch_size, rng):
                optimizer.zero_grad()
                out = model.graph.forward(model.prepare(x))
                loss, dout = loss_fn(out, y.astype(out.dtype))
                if not math.isfinite(loss):
                    logger.error(f"第 {epoch} 轮出现非有限损失: {loss}")
                    raise NonFiniteValueError(f"第 {epoch} 轮出现非有限损失 ({model.arch_name})")
                model.graph.backward(dout)
                optimizer.step()
                total += loss * len(x)
                seen += len(x)

            val_metric = evaluate(model, val_dataset, cfg.batch_size) if val_dataset is not None else None
            history.records.append(EpochRecord(epoch, total / seen, val_metric))
            progress = int(epoch / cfg.epochs * 100)
            message = f"第 {epoch}/{cfg.epochs} 轮: loss={total / seen:.6f}"
            if val_metric is not None:
                message += f", val={val_metric:.4f}"
            self._update_progress(message, progress)

        return TrainResult(model=model, history=history)


def train(model: Estimator, dataset, cfg: TrainConfig = TrainConfig(), val_dataset=None,
          progress_callback: Optional[Callable] = None) -> TrainResult:
    """训练入口，参见 Trainer.fit"""
    return Trainer(cfg, progress_callback).fit(model, dataset, val_dataset)


def align_depth_scale(cfg: TrainConfig, far: Optional[float]) -> TrainConfig:
    """
    让深度归一化尺度与数据集的 far 一致

    Args:
        cfg: 训练参数
        far: 清单中记录的远平面距离，缺失时不做调整

    Returns:
        depth_scale 等于 far 的训练参数
    """
    if far is None or not math.isfinite(far) or far <= 0:
        return cfg
    if not math.isclose(cfg.depth_scale, far):
        logger.warning(f"depth_scale={cfg.depth_scale} 与数据集 far={far} 不一致，改用 far 归一化深度")
        return cfg.model_copy(update={"depth_scale": float(far)})
    return cfg
