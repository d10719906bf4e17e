"""
数据集模块
生成带标注的实例，按时序/多视角堆叠，读写磁盘格式，并管理数据划分
"""
import logging
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from chain import (ChainConfig, CountLabel, JointLimits, LengthLabel, LinkPoses,
                   MAX_MOVING_LINKS, MIN_MOVING_LINKS, count_label, forward_kinematics,
                   padded_length_label, sample_config)
from config import GenerationParams
from errors import FormatError, InvalidArgumentError, InvalidStateError
from instance_codec import FILE_SUFFIX, decode_instance, encode_instance, payload_offsets
from manifest import INSTANCE_DIR, SPLITS, DatasetManifest, ManifestEntry
from motion import JointTrajectory, angles_at, sample_trajectory
from renderer import Camera, apply_depth_noise, build_scene, default_rig, pixel_rays, shade_hits, trace_scene

logger = logging.getLogger(__name__)

MODALITIES = ("depth", "gray")
MODES = ("temporal", "multiview")

# 原始规模下三个划分的实例数
REFERENCE_SPLIT_COUNTS = (153600, 28800, 76800)


@dataclass(eq=False)
class InstanceRecord:
    """一个生成的对象：配置、轨迹、全部相机全部时间步的图像以及标签"""
    instance_id: str
    config: ChainConfig
    trajectory: JointTrajectory
    depth: np.ndarray = field(repr=False)  # (cameras, timesteps, H, W) float32
    gray: np.ndarray = field(repr=False)   # (cameras, timesteps, H, W) float32
    seed: int
    params: GenerationParams

    @property
    def num_cameras(self) -> int:
        return self.depth.shape[0]

    @property
    def num_timesteps(self) -> int:
        return self.depth.shape[1]

    @property
    def count_label(self) -> CountLabel:
        return count_label(self.config.n)

    @property
    def length_label(self) -> LengthLabel:
        return padded_length_label(self.config)

    def equals(self, other: 'InstanceRecord') -> bool:
        """逐位比较图像，精确比较配置、轨迹与标签"""
        return (
            self.instance_id == other.instance_id
            and self.seed == other.seed
            and self.config == other.config
            and self.params == other.params
            and self.trajectory.fps == other.trajectory.fps
            and np.array_equal(self.trajectory.angles, other.trajectory.angles)
            and self.depth.dtype == other.depth.dtype
            and self.depth.tobytes() == other.depth.tobytes()
            and self.gray.tobytes() == other.gray.tobytes()
        )


@dataclass(frozen=True)
class Frame:
    """单相机单时刻的观测：深度、灰度与位姿标注"""
    depth: np.ndarray = field(repr=False)
    gray: np.ndarray = field(repr=False)
    poses: LinkPoses


@dataclass(frozen=True)
class SampleStack:
    """网络输入：D x H x W x 1 的堆叠及其标签"""
    data: np.ndarray = field(repr=False)
    modality: str
    mode: str
    count_label: CountLabel
    length_label: LengthLabel

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape


def rig_from_params(params: GenerationParams) -> List[Camera]:
    """按生成参数构造相机阵列"""
    return default_rig(
        count=params.rig_size, radius=params.rig_radius, height=params.rig_height,
        img_w=params.img_w, img_h=params.img_h, target=params.target,
        fov_y=params.fov_y, near=params.near, far=params.far,
    )


def instance_seed(base_seed: int, index: int) -> int:
    """派生实例种子：base_seed 与实例序号按位异或"""
    return int(base_seed) ^ int(index)


def instance_id_for(n: int, index: int) -> str:
    return f"n{n}_{index:06d}"


def generate_instance(seed: int, n: int, params: GenerationParams = GenerationParams(),
                      instance_id: Optional[str] = None) -> InstanceRecord:
    """
    生成一个带标注的实例

    采样配置和轨迹，对每个 (相机, 时间步) 渲染深度和灰度图。结果是
    (seed, n, params) 的确定性函数。

    Args:
        seed: 64 位非负种子
        n: 活动连杆数
        params: 生成参数
        instance_id: 实例ID，默认由种子和 n 构造

    Returns:
        InstanceRecord
    """
    if seed < 0 or seed >= 2 ** 64:
        raise InvalidArgumentError(f"种子必须是 64 位非负整数: {seed}")

    rng = np.random.default_rng(seed)
    config = sample_config(rng, n)
    limits = JointLimits(params.joint_min, params.joint_max)
    trajectory = sample_trajectory(
        rng, n, frames=params.frames, limits=limits, max_speed=params.max_speed,
        fps=params.fps, waypoint_spacing=params.waypoint_spacing,
    ).as_float32()

    cameras = rig_from_params(params)
    rays = [pixel_rays(cam) for cam in cameras]
    shape = (len(cameras), params.frames, params.img_h, params.img_w)
    depth = np.empty(shape, dtype=np.float32)
    gray = np.empty(shape, dtype=np.float32)

    for t in range(params.frames):
        poses = forward_kinematics(config, angles_at(trajectory, t))
        scene = build_scene(config, poses, radius=params.link_radius, ground_plane=params.ground_plane)
        for c, cam in enumerate(cameras):
            d, hit_id, normals = trace_scene(scene, cam, rays[c])
            g = shade_hits(scene, hit_id, normals, params.light_dir, params.ambient)
            d = apply_depth_noise(d, params.depth_noise_std, rng, cam.near, cam.far)
            depth[c, t] = d.reshape(cam.height, cam.width)
            gray[c, t] = g.reshape(cam.height, cam.width)

    return InstanceRecord(
        instance_id=instance_id or f"seed{seed}_n{n}",
        config=config,
        trajectory=trajectory,
        depth=depth,
        gray=gray,
        seed=int(seed),
        params=params,
    )


def frame(inst: InstanceRecord, camera: int, t: int) -> Frame:
    """取某相机某时刻的观测和位姿标注"""
    if not 0 <= camera < inst.num_cameras:
        raise IndexError(f"相机序号 {camera} 超出范围 [0, {inst.num_cameras})")
    if not 0 <= t < inst.num_timesteps:
        raise IndexError(f"时间步 {t} 超出范围 [0, {inst.num_timesteps})")
    poses = forward_kinematics(inst.config, angles_at(inst.trajectory, t))
    return Frame(depth=inst.depth[camera, t], gray=inst.gray[camera, t], poses=poses)


def _planes(inst: InstanceRecord, modality: str) -> np.ndarray:
    if modality == "depth":
        return inst.depth
    if modality == "gray":
        return inst.gray
    raise InvalidArgumentError(f"未知模态: {modality}（应为 {MODALITIES}）")


def stack_temporal(inst: InstanceRecord, camera: int, modality: str = "depth") -> SampleStack:
    """
    单相机的时序堆叠

    Returns:
        data 形状 (timesteps, H, W, 1)，按时间排序
    """
    planes = _planes(inst, modality)
    if not 0 <= camera < inst.num_cameras:
        raise IndexError(f"相机序号 {camera} 超出范围 [0, {inst.num_cameras})")
    return SampleStack(
        data=planes[camera][..., None].copy(),
        modality=modality,
        mode="temporal",
        count_label=inst.count_label,
        length_label=inst.length_label,
    )


def stack_multiview(inst: InstanceRecord, t: int, modality: str = "depth") -> SampleStack:
    """
    单时刻的多视角堆叠

    Returns:
        data 形状 (cameras, H, W, 1)，按相机序号排序
    """
    planes = _planes(inst, modality)
    if not 0 <= t < inst.num_timesteps:
        raise IndexError(f"时间步 {t} 超出范围 [0, {inst.num_timesteps})")
    return SampleStack(
        data=planes[:, t][..., None].copy(),
        modality=modality,
        mode="multiview",
        count_label=inst.count_label,
        length_label=inst.length_label,
    )


def _instance_header(inst: InstanceRecord) -> dict:
    return {
        "id": inst.instance_id,
        "seed": inst.seed,
        "n": inst.config.n,
        "lengths": list(inst.config.lengths),
        "colors": list(inst.config.colors),
        "fps": inst.trajectory.fps,
        "params": inst.params.model_dump(mode="json"),
    }


def write_instance(inst: InstanceRecord, root: Path) -> ManifestEntry:
    """
    写出实例文件 instances/<id>.kcb

    Args:
        inst: 实例
        root: 数据集根目录

    Returns:
        对应的清单条目
    """
    header = _instance_header(inst)
    data = encode_instance(header, inst.depth, inst.gray, inst.trajectory.angles.astype(np.float32))
    rel = f"{INSTANCE_DIR}/{inst.instance_id}{FILE_SUFFIX}"
    path = Path(root) / rel
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(FILE_SUFFIX + ".tmp")
    try:
        tmp.write_bytes(data)
        tmp.replace(path)
    except OSError as e:
        logger.error(f"写出实例失败: {path}: {e}")
        raise

    header_length = int.from_bytes(data[4:8], "little")
    offsets = payload_offsets(header_length, {
        "cameras": inst.num_cameras, "timesteps": inst.num_timesteps,
        "height": inst.depth.shape[2], "width": inst.depth.shape[3],
    })
    return ManifestEntry(
        id=inst.instance_id,
        n=inst.config.n,
        lengths=list(inst.config.lengths),
        seed=inst.seed,
        file=rel,
        size=len(data),
        crc32=zlib.crc32(data) & 0xFFFFFFFF,
        header_length=header_length,
        payload_offset=offsets["payload_offset"],
        trajectory_offset=offsets["trajectory_offset"],
    )


def load_instance(entry: ManifestEntry, root: Path) -> InstanceRecord:
    """
    读取并校验实例文件

    Raises:
        OSError: 读取失败
        ChecksumMismatchError / FormatVersionError / FormatError: 文件损坏或版本不符
    """
    path = Path(root) / entry.file
    try:
        decoded = decode_instance(path.read_bytes())
    except Exception as e:
        logger.error(f"读取实例失败: {path}: {e}")
        raise

    header = decoded.header
    try:
        config = ChainConfig(n=header["n"], lengths=tuple(header["lengths"]), colors=tuple(header["colors"]))
        trajectory = JointTrajectory(angles=decoded.trajectory.astype(np.float64), fps=header["fps"])
        params = GenerationParams(**header["params"])
        instance_id, seed = header["id"], header["seed"]
    except (ValidationError, InvalidArgumentError, KeyError, TypeError) as e:
        logger.error(f"实例头部字段无效: {path}: {e}")
        raise FormatError(f"实例头部字段无效: {path}: {e}") from e
    return InstanceRecord(
        instance_id=instance_id,
        config=config,
        trajectory=trajectory,
        depth=decoded.depth,
        gray=decoded.gray,
        seed=seed,
        params=params,
    )


def regenerate_instance(entry: ManifestEntry, manifest: DatasetManifest, root: Path) -> ManifestEntry:
    """按清单中记录的种子重新生成并写出一个实例"""
    params = GenerationParams(**manifest.params)
    inst = generate_instance(entry.seed, entry.n, params, instance_id=entry.id)
    new_entry = write_instance(inst, root)
    new_entry.split = entry.split
    logger.info(f"重新生成实例: {entry.id}")
    return new_entry


def _check_fractions(fractions: Sequence[float]) -> Tuple[float, float, float]:
    if len(fractions) != 3:
        raise InvalidArgumentError(f"需要 3 个划分比例 (train, val, test): {fractions}")
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidArgumentError(f"划分比例必须非负且和为1: {fractions}")
    return tuple(float(f) for f in fractions)


def make_splits(manifest: DatasetManifest, fractions: Sequence[float] = (0.6, 0.1, 0.3),
                seed: int = 0) -> DatasetManifest:
    """
    按 n 分层、以实例为单位划分 train/val/test

    Args:
        manifest: 数据集清单
        fractions: (train, val, test) 比例
        seed: 划分种子

    Returns:
        带划分信息的新清单
    """
    f_train, f_val, _ = _check_fractions(fractions)
    rng = np.random.default_rng(seed)

    groups: Dict[int, List[ManifestEntry]] = {}
    for entry in manifest.entries:
        groups.setdefault(entry.n, []).append(entry)

    assignment: Dict[str, str] = {}
    for n in sorted(groups):
        members = sorted(groups[n], key=lambda e: e.id)
        order = rng.permutation(len(members))
        total = len(members)
        n_train = int(round(f_train * total))
        n_val = min(int(round(f_val * total)), total - n_train)
        for rank, idx in enumerate(order):
            if rank < n_train:
                split = "train"
            elif rank < n_train + n_val:
                split = "val"
            else:
                split = "test"
            assignment[members[idx].id] = split

    entries = [ManifestEntry.from_dict({**e.to_dict(), "split": assignment[e.id]}) for e in manifest.entries]
    logger.info(f"数据划分完成: {dict((s, sum(1 for v in assignment.values() if v == s)) for s in SPLITS)}")
    return DatasetManifest(params=dict(manifest.params), entries=entries,
                           base_seed=manifest.base_seed, format_version=manifest.format_version)


def _generate_task(args) -> dict:
    root, index, n, seed, params_dict = args
    params = GenerationParams(**params_dict)
    inst = generate_instance(seed, n, params, instance_id=instance_id_for(n, index))
    return write_instance(inst, Path(root)).to_dict()


def generate_dataset(
    root: Path,
    per_n: int,
    params: GenerationParams = GenerationParams(),
    seed: int = 0,
    jobs: int = 1,
    fractions: Optional[Sequence[float]] = (0.6, 0.1, 0.3),
    progress_callback: Optional[Callable[[str, int], None]] = None,
) -> DatasetManifest:
    """
    生成完整数据集：每个 n 生成 per_n 个实例并写出清单

    输出与 jobs 无关：实例序号、种子和清单顺序都是固定的，只有主进程写清单。

    Args:
        root: 数据集根目录
        per_n: 每个 n 的实例数
        params: 生成参数
        seed: 基础种子
        jobs: 并行进程数
        fractions: 划分比例，None 表示不划分
        progress_callback: 进度回调 (message, progress)

    Returns:
        数据集清单
    """
    if per_n < 1:
        raise InvalidArgumentError(f"per_n 必须 >= 1: {per_n}")
    if jobs < 1:
        raise InvalidArgumentError(f"jobs 必须 >= 1: {jobs}")
    if fractions is not None:
        _check_fractions(fractions)

    root = Path(root)
    (root / INSTANCE_DIR).mkdir(parents=True, exist_ok=True)
    params_dict = params.model_dump(mode="json")
    tasks = []
    for n in range(MIN_MOVING_LINKS, MAX_MOVING_LINKS + 1):
        for k in range(per_n):
            index = (n - 1) * per_n + k
            tasks.append((str(root), index, n, instance_seed(seed, index), params_dict))

    start = time.time()
    results: List[dict] = []

    def _report(done: int):
        message = f"已生成 {done}/{len(tasks)} 个实例"
        logger.info(message)
        if progress_callback:
            progress_callback(message, int(done * 100 / len(tasks)))

    if jobs == 1:
        for i, task in enumerate(tasks):
            results.append(_generate_task(task))
            _report(i + 1)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, result in enumerate(pool.map(_generate_task, tasks)):
                results.append(result)
                _report(i + 1)

    manifest = DatasetManifest(params=params_dict, base_seed=seed)
    for item in results:
        manifest.add_entry(ManifestEntry.from_dict(item))
    if fractions is not None:
        manifest = make_splits(manifest, fractions, seed)
    manifest.save(root)
    logger.info(f"数据集生成完成: {len(results)} 个实例，用时 {time.time() - start:.1f}s")
    return manifest


class StackDataset:
    """
    某个划分下的内存堆叠数据集

    targets 取决于 label_kind：
      count  -> 6 维 one-hot
      padded -> 7 维补零长度
      lengths-> n+1 维长度（只保留 n == only_n 的实例）
    """

    def __init__(
        self,
        root: Path,
        manifest: DatasetManifest,
        split: str,
        mode: str = "multiview",
        modality: str = "depth",
        label_kind: str = "count",
        timestep_stride: int = 1,
        only_n: Optional[int] = None,
    ):
        if split not in SPLITS:
            raise InvalidArgumentError(f"未知划分: {split}")
        if mode not in MODES:
            raise InvalidArgumentError(f"未知模式: {mode}")
        if modality not in MODALITIES:
            raise InvalidArgumentError(f"未知模态: {modality}")
        if label_kind not in ("count", "padded", "lengths"):
            raise InvalidArgumentError(f"未知标签类型: {label_kind}")
        if label_kind == "lengths" and only_n is None:
            raise InvalidArgumentError("lengths 标签需要指定 only_n")
        if not manifest.has_splits():
            raise InvalidStateError("清单中没有数据划分，请先运行 make_splits")

        entries = manifest.split_entries(split)
        if only_n is not None:
            entries = [e for e in entries if e.n == only_n]

        self.split = split
        self.mode = mode
        self.modality = modality
        self.label_kind = label_kind
        inputs, targets, counts, padded, ids = [], [], [], [], []
        for entry in entries:
            inst = load_instance(entry, root)
            for stack in self._stacks(inst, timestep_stride):
                inputs.append(stack.data)
                counts.append(stack.count_label.onehot)
                padded.append(stack.length_label.padded)
                ids.append(inst.instance_id)
                if label_kind == "count":
                    targets.append(stack.count_label.onehot)
                elif label_kind == "padded":
                    targets.append(stack.length_label.padded)
                else:
                    targets.append(stack.length_label.padded[:inst.config.n + 1])

        if inputs:
            self.inputs = np.stack(inputs).astype(np.float32)
            self.targets = np.stack(targets)
            self.count_labels = np.stack(counts)
            self.padded_labels = np.stack(padded)
        else:
            self.inputs = np.zeros((0,), dtype=np.float32)
            self.targets = np.zeros((0,))
            self.count_labels = np.zeros((0, 6))
            self.padded_labels = np.zeros((0, 7))
        self.instance_ids = ids
        logger.info(f"加载 {split} 划分: {len(entries)} 个实例 -> {len(ids)} 个堆叠 ({mode}/{modality})")

    def _stacks(self, inst: InstanceRecord, stride: int) -> Iterator[SampleStack]:
        if self.mode == "temporal":
            for c in range(inst.num_cameras):
                yield stack_temporal(inst, c, self.modality)
        else:
            for t in range(0, inst.num_timesteps, stride):
                yield stack_multiview(inst, t, self.modality)

    def __len__(self) -> int:
        return len(self.instance_ids)

    @property
    def true_counts(self) -> np.ndarray:
        """真实活动连杆数 (1..6)"""
        return np.argmax(self.count_labels, axis=1) + 1

    def batches(self, batch_size: int, rng: Optional[np.random.Generator] = None
                ) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        """按批迭代；给定 rng 时先打乱顺序"""
        order = np.arange(len(self)) if rng is None else rng.permutation(len(self))
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            yield self.inputs[idx], self.targets[idx]
