"""
估计器模块
连杆计数网络（3D 卷积 / CNN-LSTM）、按 n 划分的长度回归网络、端到端网络与两阶段组合
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from chain import LABEL_WIDTH, MAX_MOVING_LINKS, MIN_MOVING_LINKS, NUM_CLASSES
from checkpoint import load_checkpoint, save_checkpoint
from errors import InvalidArgumentError, InvalidStateError
from metrics import pad_prediction
from nn_layers import (LSTM, Conv2D, Conv3D, Dense, Flatten, Linear, MaxPool, ModelGraph,
                       ReLU, Softmax, TimeDistributed)

logger = logging.getLogger(__name__)

ARCHS = ("conv3d", "cnn_lstm")
KINDS = ("counter", "regressor", "end_to_end")

CONV3D_CHANNELS = (8, 16, 32, 32)
CONV2D_CHANNELS = (8, 16, 32)
MIN_FRAME_SIZE = 4


@dataclass(frozen=True)
class ArchName:
    """架构名，形如 CONV3D-Depth-MV / LSTM-Grey-TMP"""
    arch: str      # conv3d / cnn_lstm
    modality: str  # depth / gray
    mode: str      # temporal / multiview

    @property
    def name(self) -> str:
        arch = "CONV3D" if self.arch == "conv3d" else "LSTM"
        modality = "Depth" if self.modality == "depth" else "Grey"
        mode = "TMP" if self.mode == "temporal" else "MV"
        return f"{arch}-{modality}-{mode}"

    def __str__(self):
        return self.name


def parse_arch_name(name: str) -> ArchName:
    """
    解析架构名（不区分大小写）

    Args:
        name: 例如 "CONV3D-Depth-MV"、"lstm-grey-tmp"
    """
    parts = name.strip().lower().replace("_", "-").split("-")
    if len(parts) == 4 and parts[0] == "cnn" and parts[1] == "lstm":
        parts = ["lstm"] + parts[2:]
    if len(parts) != 3:
        raise InvalidArgumentError(f"无法解析架构名: {name}（应形如 CONV3D-Depth-MV）")
    arch_map = {"conv3d": "conv3d", "lstm": "cnn_lstm", "cnnlstm": "cnn_lstm"}
    modality_map = {"depth": "depth", "grey": "gray", "gray": "gray"}
    mode_map = {"tmp": "temporal", "temporal": "temporal", "mv": "multiview", "multiview": "multiview"}
    try:
        return ArchName(arch_map[parts[0]], modality_map[parts[1]], mode_map[parts[2]])
    except KeyError:
        raise InvalidArgumentError(f"无法解析架构名: {name}（应形如 CONV3D-Depth-MV）") from None


class Estimator:
    """
    网络及其元数据

    input_scale 在送入网络前乘到输入上（深度除以 far 平面距离，灰度为 1）
    """

    kind = "estimator"

    def __init__(self, graph: ModelGraph, arch: str = "conv3d", mode: str = "multiview",
                 modality: str = "depth", n: Optional[int] = None, input_scale: float = 1.0):
        if arch not in ARCHS:
            raise InvalidArgumentError(f"未知架构: {arch}")
        self.graph = graph
        self.arch = arch
        self.mode = mode
        self.modality = modality
        self.n = n
        self.input_scale = float(input_scale)
        self._validate()

    def _validate(self):
        pass

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return self.graph.input_shape

    @property
    def output_dim(self) -> int:
        return int(self.graph.output_shape[-1])

    @property
    def arch_name(self) -> ArchName:
        return ArchName(self.arch, self.modality, self.mode)

    def param_count(self) -> int:
        return self.graph.param_count()

    def prepare(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float32) * np.float32(self.input_scale)).astype(np.float32, copy=False)

    def predict(self, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """
        批量前向

        Args:
            x: B x D x H x W x 1 原始堆叠（未归一化）
        """
        x = np.asarray(x)
        if x.ndim == len(self.input_shape):
            x = x[None]
        outputs = [self.graph.forward(self.prepare(x[i:i + batch_size]))
                   for i in range(0, len(x), batch_size)]
        if not outputs:
            return np.zeros((0, self.output_dim), dtype=np.float32)
        return np.concatenate(outputs)

    def metadata(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "arch": self.arch,
            "mode": self.mode,
            "modality": self.modality,
            "n": self.n,
            "input_scale": self.input_scale,
            "input_shape": list(self.input_shape),
        }

    def save(self, path: Path, seed: int = 0, epoch: int = 0) -> Path:
        return save_checkpoint(path, self.graph, self.metadata(), seed, epoch)


class CounterModel(Estimator):
    """连杆计数：6 维 softmax 输出，类别 k 对应 n = k + 1"""

    kind = "counter"

    def _validate(self):
        if self.graph.output_shape != (NUM_CLASSES,) or not isinstance(self.graph.layers[-1], Softmax):
            raise InvalidArgumentError(f"计数网络必须以 {NUM_CLASSES} 维 softmax 结尾")

    def predict_counts(self, x: np.ndarray) -> np.ndarray:
        """argmax + 1，并列时取最小序号"""
        return np.argmax(self.predict(x), axis=1) + 1


class RegressorModel(Estimator):
    """给定 n 的长度回归：输出 n + 1 个长度（含基座）"""

    kind = "regressor"

    def _validate(self):
        if self.n is None or not MIN_MOVING_LINKS <= self.n <= MAX_MOVING_LINKS:
            raise InvalidArgumentError(f"回归网络的 n 必须在 {MIN_MOVING_LINKS}..{MAX_MOVING_LINKS}: {self.n}")
        if self.graph.output_shape != (self.n + 1,):
            raise InvalidArgumentError(f"回归网络输出维数应为 {self.n + 1}: {self.graph.output_shape}")


class EndToEndModel(Estimator):
    """端到端长度估计：7 维线性输出，超出 n 的位置回归到 0"""

    kind = "end_to_end"

    def _validate(self):
        if self.graph.output_shape != (LABEL_WIDTH,):
            raise InvalidArgumentError(f"端到端网络输出维数应为 {LABEL_WIDTH}: {self.graph.output_shape}")


def _check_stack_dims(input_shape: Sequence[int]) -> Tuple[int, int, int, int]:
    if len(input_shape) != 4:
        raise InvalidArgumentError(f"输入应为 D x H x W x C: {tuple(input_shape)}")
    d, h, w, c = (int(v) for v in input_shape)
    if d < 1 or c < 1 or h < MIN_FRAME_SIZE or w < MIN_FRAME_SIZE:
        raise InvalidArgumentError(
            f"输入尺寸过小: {tuple(input_shape)}（D >= 1，H、W >= {MIN_FRAME_SIZE}）"
        )
    return d, h, w, c


def _conv_trunk(spatial: Sequence[int], channels: Sequence[int], conv_cls) -> list:
    """[conv 3x3(x3) -> relu -> 自适应 2 池化] x len(channels)"""
    layers = []
    spatial = list(spatial)
    for ch in channels:
        pool = MaxPool.adaptive(spatial)
        layers += [conv_cls(ch), ReLU(), pool]
        spatial = [s // p for s, p in zip(spatial, pool.pool)]
    return layers


def build_counter_conv3d(input_shape: Sequence[int], mode: str = "multiview", modality: str = "depth",
                         seed: int = 0, channels: Sequence[int] = CONV3D_CHANNELS,
                         hidden: int = 128) -> CounterModel:
    """
    3D 卷积计数网络

    Args:
        input_shape: D x H x W x 1（时序 D=帧数，多视角 D=相机数）
        channels: 四个卷积层的通道数
        hidden: 第一个全连接层宽度
    """
    d, h, w, _ = _check_stack_dims(input_shape)
    layers = _conv_trunk((d, h, w), channels, Conv3D)
    layers += [Flatten(), Dense(hidden, "he"), ReLU(), Dense(NUM_CLASSES, "lecun"), Softmax()]
    graph = ModelGraph(layers, input_shape, seed)
    logger.info(f"构建 3D 卷积计数网络: 输入 {tuple(input_shape)}，参数 {graph.param_count()}")
    return CounterModel(graph, "conv3d", mode, modality)


def build_counter_cnn_lstm(frame_shape: Sequence[int], steps: int, mode: str = "temporal",
                           modality: str = "depth", seed: int = 0,
                           channels: Sequence[int] = CONV2D_CHANNELS, features: int = 64,
                           hidden: int = 64) -> CounterModel:
    """
    CNN-LSTM 计数网络：共享权重的逐帧 2D 卷积编码器 + LSTM + softmax

    Args:
        frame_shape: H x W x 1
        steps: 序列长度 D
    """
    if len(frame_shape) != 3:
        raise InvalidArgumentError(f"帧形状应为 H x W x C: {tuple(frame_shape)}")
    if steps < 1:
        raise InvalidArgumentError(f"序列长度必须为正: {steps}")
    _check_stack_dims((steps,) + tuple(frame_shape))
    h, w, _ = frame_shape
    encoder = _conv_trunk((h, w), channels, Conv2D)
    encoder += [Flatten(), Dense(features, "he"), ReLU()]
    layers = [TimeDistributed(encoder), LSTM(hidden), Dense(NUM_CLASSES, "lecun"), Softmax()]
    graph = ModelGraph(layers, (steps,) + tuple(frame_shape), seed)
    logger.info(f"构建 CNN-LSTM 计数网络: {steps} 步，参数 {graph.param_count()}")
    return CounterModel(graph, "cnn_lstm", mode, modality)


def _regression_head(outputs: int, width: int) -> list:
    return [Flatten(), Dense(width, "he"), ReLU(), Dense(width, "lecun"), Linear(),
            Dense(outputs, "lecun"), Linear()]


def build_length_regressor(n: int, input_shape: Sequence[int], mode: str = "multiview",
                           modality: str = "depth", seed: int = 0,
                           channels: Sequence[int] = CONV3D_CHANNELS, width: int = 512) -> RegressorModel:
    """
    n 个活动连杆的长度回归网络：3D 卷积主干 + FC 512 relu + FC 512 linear + FC (n+1) linear
    """
    if not MIN_MOVING_LINKS <= n <= MAX_MOVING_LINKS:
        raise InvalidArgumentError(f"n 必须在 {MIN_MOVING_LINKS}..{MAX_MOVING_LINKS}: {n}")
    d, h, w, _ = _check_stack_dims(input_shape)
    layers = _conv_trunk((d, h, w), channels, Conv3D) + _regression_head(n + 1, width)
    graph = ModelGraph(layers, input_shape, seed)
    return RegressorModel(graph, "conv3d", mode, modality, n=n)


def build_end_to_end(input_shape: Sequence[int], mode: str = "multiview", modality: str = "depth",
                     seed: int = 0, channels: Sequence[int] = CONV3D_CHANNELS,
                     width: int = 512) -> EndToEndModel:
    """端到端网络：与回归网络相同的结构，输出 7 维补零长度"""
    d, h, w, _ = _check_stack_dims(input_shape)
    layers = _conv_trunk((d, h, w), channels, Conv3D) + _regression_head(LABEL_WIDTH, width)
    graph = ModelGraph(layers, input_shape, seed)
    return EndToEndModel(graph, "conv3d", mode, modality)


class EstimatorFactory:
    """根据元数据创建估计器"""

    _classes = {"counter": CounterModel, "regressor": RegressorModel, "end_to_end": EndToEndModel}

    @classmethod
    def build_estimator(cls, metadata: Mapping[str, Any], graph: Optional[ModelGraph] = None,
                        seed: int = 0) -> Estimator:
        """
        创建估计器

        Args:
            metadata: kind/arch/mode/modality/n/input_shape/input_scale
            graph: 已有网络（例如从检查点恢复）；为 None 时按元数据新建
            seed: 新建网络时的初始化种子
        """
        kind = metadata.get("kind")
        if kind not in cls._classes:
            raise InvalidArgumentError(f"未知估计器类型: {kind}")
        arch = metadata.get("arch", "conv3d")
        mode = metadata.get("mode", "multiview")
        modality = metadata.get("modality", "depth")
        n = metadata.get("n")
        scale = metadata.get("input_scale", 1.0)

        if graph is not None:
            return cls._classes[kind](graph, arch, mode, modality, n=n, input_scale=scale)

        shape = tuple(metadata["input_shape"])
        if kind == "counter":
            if arch == "cnn_lstm":
                model = build_counter_cnn_lstm(shape[1:], shape[0], mode, modality, seed)
            else:
                model = build_counter_conv3d(shape, mode, modality, seed)
        elif arch != "conv3d":
            raise InvalidArgumentError(f"{kind} 仅支持 conv3d 主干，收到 {arch}")
        elif kind == "regressor":
            model = build_length_regressor(n, shape, mode, modality, seed)
        else:
            model = build_end_to_end(shape, mode, modality, seed)
        model.input_scale = float(scale)
        return model


def build_estimator(metadata: Mapping[str, Any], graph: Optional[ModelGraph] = None,
                    seed: int = 0) -> Estimator:
    return EstimatorFactory.build_estimator(metadata, graph, seed)


def load_estimator(path: Path) -> Tuple[Estimator, Dict[str, Any]]:
    """从检查点恢复估计器，返回 (estimator, header)"""
    graph, header = load_checkpoint(path)
    return build_estimator(header["metadata"], graph), header


def _regressor_table(regressors: Union[Mapping[int, RegressorModel], Sequence[RegressorModel]]
                     ) -> Dict[int, RegressorModel]:
    if isinstance(regressors, Mapping):
        return dict(regressors)
    return {r.n: r for r in regressors}


def naive_predict(counter: CounterModel,
                  regressors: Union[Mapping[int, RegressorModel], Sequence[RegressorModel]],
                  x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    两阶段组合的批量版本

    Returns:
        (n_hat: B, lengths: B x 7)
    """
    table = _regressor_table(regressors)
    for reg in table.values():
        if (reg.mode, reg.modality) != (counter.mode, counter.modality):
            raise InvalidArgumentError(
                f"回归网络 n={reg.n} 的输入 ({reg.mode}/{reg.modality}) 与计数网络 "
                f"({counter.mode}/{counter.modality}) 不一致"
            )
    x = np.asarray(x)
    if x.ndim == len(counter.input_shape):
        x = x[None]
    n_hat = counter.predict_counts(x)
    lengths = np.zeros((len(x), LABEL_WIDTH), dtype=np.float64)
    for n in np.unique(n_hat):
        n = int(n)
        if n not in table:
            logger.error(f"缺少 n={n} 的回归网络")
            raise InvalidStateError(f"缺少 n={n} 的回归网络")
        rows = np.flatnonzero(n_hat == n)
        raw = table[n].predict(x[rows])
        for row, values in zip(rows, raw):
            lengths[row] = pad_prediction(values, n)
    return n_hat, lengths


def predict_naive_combination(counter: CounterModel,
                              regressors: Union[Mapping[int, RegressorModel], Sequence[RegressorModel]],
                              stack) -> Tuple[int, np.ndarray]:
    """
    先计数再按 n_hat 选择回归网络，输出按补零规则扩展为 7 维

    Args:
        counter: 计数网络
        regressors: {n: 回归网络} 或回归网络列表
        stack: SampleStack 或 D x H x W x 1 数组

    Returns:
        (n_hat, 7 维长度)
    """
    data = getattr(stack, "data", stack)
    n_hat, lengths = naive_predict(counter, regressors, np.asarray(data)[None])
    return int(n_hat[0]), lengths[0]
