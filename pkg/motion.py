"""
运动生成模块
生成随机关节角轨迹（默认 100 帧，10 fps）
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from chain import JointLimits, JointState
from errors import InvalidArgumentError

logger = logging.getLogger(__name__)

DEFAULT_FRAMES = 100
DEFAULT_FPS = 10.0
DEFAULT_MAX_SPEED = 1.0  # rad/s
DEFAULT_WAYPOINT_SPACING = 20

# 航点可达窗口略微收缩，避免插值步长因舍入超出速度上限
_REACH_SHRINK = 1.0 - 1e-9


@dataclass(frozen=True)
class JointTrajectory:
    """关节角时间序列，angles 形状为 frames x n"""
    angles: np.ndarray = field(repr=False)
    fps: float = DEFAULT_FPS

    @property
    def frames(self) -> int:
        return self.angles.shape[0]

    @property
    def n(self) -> int:
        return self.angles.shape[1]

    def as_float32(self) -> 'JointTrajectory':
        """量化为 float32 精度（与磁盘格式一致）"""
        quantized = self.angles.astype(np.float32).astype(np.float64)
        return JointTrajectory(angles=quantized, fps=self.fps)


def sample_trajectory(
    rng: np.random.Generator,
    n: int,
    frames: int = DEFAULT_FRAMES,
    limits: JointLimits = JointLimits(),
    max_speed: float = DEFAULT_MAX_SPEED,
    fps: float = DEFAULT_FPS,
    waypoint_spacing: int = DEFAULT_WAYPOINT_SPACING,
) -> JointTrajectory:
    """
    生成分段线性的随机轨迹

    每隔 waypoint_spacing 帧采样一个航点，航点落在上一个航点以最大角速度
    可达的窗口内（同时受关节范围约束），航点之间线性插值。

    Args:
        rng: 随机源
        n: 关节数
        frames: 帧数
        limits: 关节范围
        max_speed: 最大角速度 (rad/s)
        fps: 帧率
        waypoint_spacing: 航点间隔（帧）

    Returns:
        JointTrajectory
    """
    if n < 1:
        raise InvalidArgumentError(f"关节数必须 >= 1: {n}")
    if frames < 1:
        raise InvalidArgumentError(f"帧数必须 >= 1: {frames}")
    if waypoint_spacing < 1 or max_speed <= 0 or fps <= 0:
        raise InvalidArgumentError("航点间隔、最大速度和帧率必须为正")

    # 航点帧号：0, W, 2W, ...，最后一帧总是航点
    keyframes = list(range(0, frames, waypoint_spacing))
    if keyframes[-1] != frames - 1:
        keyframes.append(frames - 1)

    waypoints = np.empty((len(keyframes), n))
    waypoints[0] = rng.uniform(limits.lower, limits.upper, size=n)
    for k in range(1, len(keyframes)):
        reach = max_speed * (keyframes[k] - keyframes[k - 1]) / fps * _REACH_SHRINK
        low = np.maximum(limits.lower, waypoints[k - 1] - reach)
        high = np.minimum(limits.upper, waypoints[k - 1] + reach)
        waypoints[k] = rng.uniform(low, high)

    t = np.arange(frames)
    angles = np.empty((frames, n))
    for j in range(n):
        angles[:, j] = np.interp(t, keyframes, waypoints[:, j])
    np.clip(angles, limits.lower, limits.upper, out=angles)

    return JointTrajectory(angles=angles, fps=fps)


def angles_at(traj: JointTrajectory, t: int) -> JointState:
    """取第 t 帧的关节角"""
    if not 0 <= t < traj.frames:
        raise IndexError(f"帧号 {t} 超出范围 [0, {traj.frames})")
    return JointState(angles=tuple(traj.angles[t]))
