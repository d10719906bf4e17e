"""
运动链核心模块
链条配置的采样、长度归一化、正运动学以及训练标签构造
"""
import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from errors import InvalidArgumentError

logger = logging.getLogger(__name__)

MIN_MOVING_LINKS = 1
MAX_MOVING_LINKS = 6
NUM_CLASSES = MAX_MOVING_LINKS
LABEL_WIDTH = MAX_MOVING_LINKS + 1

# 归一化后的链条总长上限（米）
MAX_TOTAL_LENGTH = 3.0

BASE_LENGTH_RANGE = (1.3, 2.0)
LINK_LENGTH_RANGE = (0.3, 1.0)

PALETTE = ("black", "white", "red", "orange", "blue", "green", "yellow", "indigo")

# Rec.601 亮度，用于灰度渲染
PALETTE_LUMA = {
    "black": 0.0,
    "white": 1.0,
    "red": 0.299,
    "orange": 0.679,
    "blue": 0.114,
    "green": 0.587,
    "yellow": 0.886,
    "indigo": 0.146,
}

# 关节平面：根在原点，基座沿 +x，所有转轴平行于 +z
PLANE_ORIGIN = np.array([0.0, 0.0, 0.0])
PLANE_X = np.array([1.0, 0.0, 0.0])
PLANE_Y = np.array([0.0, 1.0, 0.0])


def _check_n(n: int):
    if not isinstance(n, (int, np.integer)) or not MIN_MOVING_LINKS <= n <= MAX_MOVING_LINKS:
        raise InvalidArgumentError(f"活动连杆数必须在 {MIN_MOVING_LINKS}..{MAX_MOVING_LINKS} 之间: {n}")


@dataclass(frozen=True)
class ChainConfig:
    """一条采样得到的运动链：活动连杆数、各连杆长度（含基座）与颜色"""
    n: int
    lengths: Tuple[float, ...]
    colors: Tuple[str, ...]

    def __post_init__(self):
        _check_n(self.n)
        object.__setattr__(self, "lengths", tuple(float(v) for v in self.lengths))
        object.__setattr__(self, "colors", tuple(self.colors))
        if len(self.lengths) != self.n + 1:
            raise InvalidArgumentError(f"lengths 应有 {self.n + 1} 项，实际 {len(self.lengths)}")
        if any(not v > 0 for v in self.lengths):
            raise InvalidArgumentError(f"连杆长度必须为正: {self.lengths}")
        if sum(self.lengths) > MAX_TOTAL_LENGTH + 1e-9:
            raise InvalidArgumentError(f"总长度超过 {MAX_TOTAL_LENGTH}: {sum(self.lengths)}")
        if len(self.colors) != self.n + 1:
            raise InvalidArgumentError(f"colors 应有 {self.n + 1} 项，实际 {len(self.colors)}")
        unknown = [c for c in self.colors if c not in PALETTE]
        if unknown:
            raise InvalidArgumentError(f"未知颜色: {unknown}")

    def to_dict(self) -> dict:
        return {"n": self.n, "lengths": list(self.lengths), "colors": list(self.colors)}

    @classmethod
    def from_dict(cls, data: dict) -> 'ChainConfig':
        return cls(n=int(data["n"]), lengths=tuple(data["lengths"]), colors=tuple(data["colors"]))


@dataclass(frozen=True)
class JointLimits:
    """关节角范围（弧度）"""
    lower: float = -2.5
    upper: float = 2.5

    def __post_init__(self):
        if not self.lower < self.upper:
            raise InvalidArgumentError(f"关节范围无效: [{self.lower}, {self.upper}]")

    def contains(self, state: 'JointState') -> bool:
        return all(self.lower <= a <= self.upper for a in state.angles)


@dataclass(frozen=True)
class JointState:
    """某一时刻的关节角，angles[i] 驱动第 i 个连杆与其父连杆之间的转动关节"""
    angles: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))


@dataclass(frozen=True)
class LinkPoses:
    """链条各连杆端点的世界坐标：根点，然后是每根连杆的远端"""
    endpoints: np.ndarray = field(repr=False)

    def link_segments(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        """每根连杆的 (近端, 远端) 线段"""
        return [(self.endpoints[i], self.endpoints[i + 1]) for i in range(len(self.endpoints) - 1)]


@dataclass(frozen=True)
class CountLabel:
    """6 维 one-hot 计数标签，类别 k 对应 n = k + 1"""
    onehot: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return int(np.argmax(self.onehot)) + 1


@dataclass(frozen=True)
class LengthLabel:
    """7 维补零长度标签"""
    padded: np.ndarray = field(repr=False)


def sample_raw_lengths(rng: np.random.Generator, n: int) -> np.ndarray:
    """
    按均匀分布采样未归一化的连杆长度

    Args:
        rng: 随机源
        n: 活动连杆数

    Returns:
        n+1 个长度，第0项为基座
    """
    _check_n(n)
    raw = np.empty(n + 1)
    raw[0] = rng.uniform(*BASE_LENGTH_RANGE)
    raw[1:] = rng.uniform(*LINK_LENGTH_RANGE, size=n)
    return raw


def normalize_lengths(raw: Sequence[float]) -> List[float]:
    """
    总长度不小于3米时按比例缩放到恰好3米

    Args:
        raw: 原始长度列表

    Returns:
        归一化后的长度列表
    """
    values = [float(v) for v in raw]
    if not values or any(not v > 0 for v in values):
        raise InvalidArgumentError(f"连杆长度必须为正: {values}")
    total = sum(values)
    if total < MAX_TOTAL_LENGTH:
        return values
    scale = MAX_TOTAL_LENGTH / total
    return [v * scale for v in values]


def sample_config(rng: np.random.Generator, n: int) -> ChainConfig:
    """
    采样一个随机链条配置

    Args:
        rng: 随机源
        n: 活动连杆数 (1..6)

    Returns:
        ChainConfig
    """
    raw = sample_raw_lengths(rng, n)
    lengths = normalize_lengths(raw)
    color_idx = rng.integers(0, len(PALETTE), size=n + 1)
    colors = tuple(PALETTE[i] for i in color_idx)
    return ChainConfig(n=n, lengths=tuple(lengths), colors=colors)


def forward_kinematics(config: ChainConfig, state: JointState) -> LinkPoses:
    """
    平面正运动学

    Args:
        config: 链条配置
        state: 关节角，数量必须等于 config.n

    Returns:
        n+2 个端点
    """
    if len(state.angles) != config.n:
        raise InvalidArgumentError(f"关节角数量 {len(state.angles)} 与活动连杆数 {config.n} 不符")

    headings = np.concatenate([[0.0], np.cumsum(state.angles)])
    endpoints = np.empty((config.n + 2, 3))
    endpoints[0] = PLANE_ORIGIN
    for i, (length, phi) in enumerate(zip(config.lengths, headings)):
        direction = np.cos(phi) * PLANE_X + np.sin(phi) * PLANE_Y
        endpoints[i + 1] = endpoints[i] + length * direction
    return LinkPoses(endpoints=endpoints)


def count_label(n: int) -> CountLabel:
    """构造 one-hot 计数标签"""
    _check_n(n)
    onehot = np.zeros(NUM_CLASSES)
    onehot[n - 1] = 1.0
    return CountLabel(onehot=onehot)


def padded_length_label(config: ChainConfig) -> LengthLabel:
    """构造 7 维补零长度标签：前 n+1 项为长度，其余为 0"""
    padded = np.zeros(LABEL_WIDTH)
    padded[:config.n + 1] = config.lengths
    return LengthLabel(padded=padded)
