"""
基准评测模块
在训练划分上训练指定架构，在测试划分上评估，汇总为结果表
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from chain import MAX_MOVING_LINKS, MIN_MOVING_LINKS
from config import TrainConfig
from dataset import StackDataset
from errors import InvalidArgumentError, InvalidStateError
from manifest import DatasetManifest
from metrics import (ConfusionMatrix, accuracy, confusion, mean_length_error, mean_normalized_length_error,
                     pad_prediction)
from models import (ArchName, CounterModel, Estimator, build_counter_cnn_lstm, build_counter_conv3d,
                    build_end_to_end, build_length_regressor, naive_predict, parse_arch_name)
from trainer import TrainHistory, Trainer, align_depth_scale

logger = logging.getLogger(__name__)

TASKS = ("count", "length", "naive", "end-to-end")

# 原始规模下的参考结果（计数为准确率，其余为平均 E_L）
REFERENCE_RESULTS: Dict[Tuple[str, str], float] = {
    ("CONV3D-Depth-TMP", "count"): 0.682,
    ("LSTM-Depth-TMP", "count"): 0.638,
    ("CONV3D-Depth-MV", "count"): 0.949,
    ("LSTM-Depth-MV", "count"): 0.956,
    ("CONV3D-Grey-TMP", "count"): 0.559,
    ("LSTM-Grey-MV", "count"): 0.891,
    ("CONV3D-Depth-TMP", "length"): 6.64,
    ("CONV3D-Depth-MV", "length"): 0.543,
    ("CONV3D-Depth-TMP", "end-to-end"): 14.8,
    ("CONV3D-Depth-MV", "end-to-end"): 0.415,
}


@dataclass(frozen=True)
class BenchmarkSpec:
    """一次评测：架构 + 任务"""
    arch: ArchName
    task: str = "count"

    @classmethod
    def parse(cls, arch_name: str, task: str = "count") -> 'BenchmarkSpec':
        if task not in TASKS:
            raise InvalidArgumentError(f"未知任务: {task}（可选 {TASKS}）")
        arch = parse_arch_name(arch_name)
        if task != "count" and arch.arch != "conv3d":
            raise InvalidArgumentError(f"{task} 任务只支持 CONV3D 架构: {arch_name}")
        return cls(arch, task)

    @property
    def label(self) -> str:
        return f"{self.arch.name}_{self.task}"


@dataclass
class ReportRow:
    """结果表的一行"""
    name: str
    task: str
    grey: int
    depth: int
    temporal: int  # 时序帧数，多视角为 0
    views: int     # 相机数，时序为 0
    total: int     # 网络输入深度 D
    train_instances: int
    test_instances: int
    train_stacks: int
    test_stacks: int
    accuracy: Optional[float] = None
    error: Optional[float] = None      # 平均 E_L（平方和）
    error_rms: Optional[float] = None  # sqrt(E_L)
    error_normalized: Optional[float] = None  # 除以基座长度的 E_L，仅灰度时序
    reference: Optional[float] = None
    stride: int = 1  # 时间步采样间隔
    seeds: List[int] = field(default_factory=list)
    per_seed: List[float] = field(default_factory=list)  # 每个种子的准确率或 E_L

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BenchmarkReport:
    """评测报告"""
    rows: List[ReportRow] = field(default_factory=list)
    confusions: Dict[str, ConfusionMatrix] = field(default_factory=dict)
    histories: Dict[str, TrainHistory] = field(default_factory=dict)
    settings: Dict = field(default_factory=dict)
    created: str = field(default_factory=lambda: datetime.now().strftime("%Y-%m-%d %H:%M:%S"))


class BenchmarkRunner:
    """依次训练并评估每个架构"""

    def __init__(self, root: Path, manifest: DatasetManifest, train_cfg: TrainConfig = TrainConfig(),
                 progress_callback: Optional[Callable] = None):
        """
        Args:
            root: 数据集根目录
            manifest: 已划分的清单
            train_cfg: 训练参数
            progress_callback: 进度回调函数，签名为 (message: str, progress: int)
        """
        if not manifest.has_splits():
            raise InvalidStateError("清单中没有数据划分")
        for split in ("train", "test"):
            if not manifest.split_entries(split):
                raise InvalidStateError(f"{split} 划分为空")
        self.root = Path(root)
        self.manifest = manifest
        self.train_cfg = align_depth_scale(train_cfg, manifest.params.get("far"))
        self.progress_callback = progress_callback
        self._cache: Dict[tuple, StackDataset] = {}

    def _update_progress(self, message: str, progress: int):
        logger.info(f"[{progress}%] {message}")
        if self.progress_callback:
            self.progress_callback(message, progress)

    def _data(self, split: str, arch: ArchName, label_kind: str, only_n: Optional[int] = None) -> StackDataset:
        key = (split, arch.mode, arch.modality, label_kind, only_n)
        if key not in self._cache:
            self._cache[key] = StackDataset(self.root, self.manifest, split, arch.mode, arch.modality,
                                            label_kind, self.train_cfg.timestep_stride, only_n)
        return self._cache[key]

    def _val(self, arch: ArchName, label_kind: str, only_n: Optional[int] = None) -> Optional[StackDataset]:
        if not self.manifest.split_entries("val"):
            return None
        return self._data("val", arch, label_kind, only_n)

    def _fit(self, model: Estimator, train_data: StackDataset, val_data, key: str,
             report: BenchmarkReport) -> Estimator:
        result = Trainer(self.train_cfg).fit(model, train_data, val_data)
        report.histories[key] = result.history
        return result.model

    def _counter(self, arch: ArchName, data: StackDataset) -> CounterModel:
        shape = data.inputs.shape[1:]
        if arch.arch == "cnn_lstm":
            return build_counter_cnn_lstm(shape[1:], shape[0], arch.mode, arch.modality, self.train_cfg.seed)
        return build_counter_conv3d(shape, arch.mode, arch.modality, self.train_cfg.seed)

    def _train_regressors(self, arch: ArchName, report: BenchmarkReport, key: str) -> Dict[int, Estimator]:
        regressors = {}
        for n in range(MIN_MOVING_LINKS, MAX_MOVING_LINKS + 1):
            data = self._data("train", arch, "lengths", n)
            if len(data) == 0:
                logger.warning(f"训练划分中没有 n={n} 的实例，跳过该回归网络")
                continue
            model = build_length_regressor(n, data.inputs.shape[1:], arch.mode, arch.modality, self.train_cfg.seed)
            regressors[n] = self._fit(model, data, self._val(arch, "lengths", n), f"{key}_n{n}", report)
        return regressors

    def _row(self, spec: BenchmarkSpec, train_data: StackDataset, test_data: StackDataset) -> ReportRow:
        arch = spec.arch
        depth = int(test_data.inputs.shape[1]) if len(test_data) else 0
        return ReportRow(
            name=arch.name,
            task=spec.task,
            grey=int(arch.modality == "gray"),
            depth=int(arch.modality == "depth"),
            temporal=depth if arch.mode == "temporal" else 0,
            views=depth if arch.mode == "multiview" else 0,
            total=depth,
            train_instances=len(self.manifest.split_entries("train")),
            test_instances=len(self.manifest.split_entries("test")),
            train_stacks=len(train_data),
            test_stacks=len(test_data),
            reference=REFERENCE_RESULTS.get((arch.name, spec.task)),
            stride=self.train_cfg.timestep_stride,
            seeds=[self.train_cfg.seed],
        )

    def run_spec(self, spec: BenchmarkSpec, report: BenchmarkReport) -> ReportRow:
        arch = spec.arch
        key = spec.label
        if spec.task == "count":
            train_data = self._data("train", arch, "count")
            test_data = self._data("test", arch, "count")
            model = self._fit(self._counter(arch, train_data), train_data, self._val(arch, "count"), key, report)
            preds = model.predict_counts(test_data.inputs)
            truths = test_data.true_counts
            row = self._row(spec, train_data, test_data)
            row.accuracy = accuracy(preds, truths)
            row.per_seed = [row.accuracy]
            report.confusions[arch.name] = confusion(preds, truths)
            return row

        if spec.task == "end-to-end":
            train_data = self._data("train", arch, "padded")
            test_data = self._data("test", arch, "padded")
            model = build_end_to_end(train_data.inputs.shape[1:], arch.mode, arch.modality, self.train_cfg.seed)
            model = self._fit(model, train_data, self._val(arch, "padded"), key, report)
            truths, preds = test_data.padded_labels, model.predict(test_data.inputs)
        elif spec.task == "naive":
            train_data = self._data("train", arch, "count")
            test_data = self._data("test", arch, "count")
            counter = self._fit(self._counter(arch, train_data), train_data, self._val(arch, "count"),
                                f"{key}_counter", report)
            regressors = self._train_regressors(arch, report, key)
            _, preds = naive_predict(counter, regressors, test_data.inputs)
            truths = test_data.padded_labels
        else:
            # 长度回归：按真实 n 选择回归网络
            train_data = self._data("train", arch, "count")
            test_data = self._data("test", arch, "count")
            regressors = self._train_regressors(arch, report, key)
            truths, preds = [], []
            for n, model in regressors.items():
                subset = self._data("test", arch, "lengths", n)
                if len(subset) == 0:
                    continue
                for values in model.predict(subset.inputs):
                    preds.append(pad_prediction(values, n))
                truths.append(subset.padded_labels)
            if not preds:
                raise InvalidStateError("测试划分中没有可评估的长度样本")
            truths, preds = np.concatenate(truths), np.stack(preds)

        row = self._row(spec, train_data, test_data)
        row.error = mean_length_error(truths, preds)
        row.error_rms = math.sqrt(row.error)
        if arch.modality == "gray" and arch.mode == "temporal":
            # 单视角灰度无法确定尺度，另报按基座长度归一化的误差
            row.error_normalized = mean_normalized_length_error(truths, preds)
        row.per_seed = [row.error]
        return row

    def _run_seeds(self, spec: BenchmarkSpec, seeds: Sequence[int], report: BenchmarkReport) -> ReportRow:
        """每个种子各训练一次，合并为一行"""
        base_cfg = self.train_cfg
        rows, confusions = [], []
        try:
            for seed in seeds:
                self.train_cfg = base_cfg.model_copy(update={"seed": seed})
                scratch = BenchmarkReport()
                rows.append(self.run_spec(spec, scratch))
                suffix = f"_seed{seed}" if len(seeds) > 1 else ""
                for key, history in scratch.histories.items():
                    report.histories[key + suffix] = history
                confusions.extend(scratch.confusions.values())
        finally:
            self.train_cfg = base_cfg

        row = rows[0]
        row.seeds = list(seeds)
        row.per_seed = [r.per_seed[0] for r in rows]
        if row.accuracy is not None:
            row.accuracy = float(np.mean([r.accuracy for r in rows]))
        if row.error is not None:
            row.error = float(np.mean([r.error for r in rows]))
            row.error_rms = math.sqrt(row.error)
        if row.error_normalized is not None:
            row.error_normalized = float(np.mean([r.error_normalized for r in rows]))
        if confusions:
            report.confusions[spec.arch.name] = ConfusionMatrix(sum(c.counts for c in confusions))
        return row

    def run(self, specs: Sequence[BenchmarkSpec], seeds: Optional[Sequence[int]] = None) -> BenchmarkReport:
        """
        执行全部评测

        Args:
            specs: 评测列表
            seeds: 训练种子列表，多个种子时报告均值与逐种子结果；None 时使用 train_cfg.seed

        Returns:
            每个评测一行的报告
        """
        if not specs:
            raise InvalidArgumentError("至少需要一个评测架构")
        seeds = list(seeds) if seeds is not None else [self.train_cfg.seed]
        if not seeds or len(set(seeds)) != len(seeds):
            raise InvalidArgumentError(f"种子列表必须非空且不重复: {seeds}")
        report = BenchmarkReport(settings={"train": self.train_cfg.model_dump(),
                                           "base_seed": self.manifest.base_seed,
                                           "seeds": seeds})
        for k, spec in enumerate(specs):
            self._update_progress(f"评测 {spec.arch.name} / {spec.task}", int(k / len(specs) * 100))
            try:
                row = self._run_seeds(spec, seeds, report)
            except Exception as e:
                logger.error(f"评测 {spec.label} 失败: {e}")
                raise
            report.rows.append(row)
            logger.info(f"{row.name} [{row.task}] accuracy={row.accuracy} error={row.error} seeds={row.seeds}")
        self._update_progress("评测完成", 100)
        return report


def run_benchmark(root: Path, manifest: DatasetManifest, specs: Sequence[BenchmarkSpec],
                  train_cfg: TrainConfig = TrainConfig(),
                  progress_callback: Optional[Callable] = None,
                  seeds: Optional[Sequence[int]] = None) -> BenchmarkReport:
    """评测入口，参见 BenchmarkRunner.run"""
    return BenchmarkRunner(root, manifest, train_cfg, progress_callback).run(specs, seeds)
