"""
数据集清单管理模块
管理 manifest.json：生成参数、实例条目与数据划分
"""
import json
import logging
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from errors import FormatError, FormatVersionError, InvalidArgumentError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
INSTANCE_DIR = "instances"
SPLITS = ("train", "val", "test")


@dataclass
class ManifestEntry:
    """单个实例的清单条目"""
    id: str  # 实例ID
    n: int  # 活动连杆数
    lengths: List[float]  # 连杆长度（含基座）
    seed: int  # 生成种子
    file: str  # 相对数据集根目录的路径
    size: int  # 文件字节数
    crc32: int  # 文件整体 CRC32
    header_length: int  # 头部字节数
    payload_offset: int  # 图像负载偏移
    trajectory_offset: int  # 轨迹偏移
    split: Optional[str] = None  # train/val/test

    def to_dict(self) -> dict:
        """转换为字典"""
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> 'ManifestEntry':
        """从字典创建实例"""
        return cls(**data)


@dataclass
class DatasetManifest:
    """数据集清单"""
    params: Dict = field(default_factory=dict)  # 生成/渲染参数
    entries: List[ManifestEntry] = field(default_factory=list)
    base_seed: int = 0
    format_version: int = MANIFEST_VERSION

    def add_entry(self, entry: ManifestEntry):
        """
        添加实例条目

        Args:
            entry: 清单条目
        """
        if self.get_entry(entry.id) is not None:
            raise InvalidArgumentError(f"实例ID重复: {entry.id}")
        self.entries.append(entry)

    def get_entry(self, instance_id: str) -> Optional[ManifestEntry]:
        """根据ID获取条目"""
        for entry in self.entries:
            if entry.id == instance_id:
                return entry
        return None

    def split_entries(self, split: str) -> List[ManifestEntry]:
        """获取某个划分下的全部条目"""
        return [e for e in self.entries if e.split == split]

    def has_splits(self) -> bool:
        return any(e.split is not None for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "base_seed": self.base_seed,
            "params": self.params,
            "entries": [e.to_dict() for e in self.entries],
        }

    def save(self, root: Path) -> Path:
        """
        保存清单到数据集根目录

        Args:
            root: 数据集根目录

        Returns:
            清单文件路径
        """
        path = Path(root) / MANIFEST_NAME
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, ensure_ascii=False, indent=2, sort_keys=True)
            f.write("\n")
        logger.info(f"清单已保存: {path} ({len(self.entries)} 个实例)")
        return path

    @classmethod
    def load(cls, root: Path) -> 'DatasetManifest':
        """
        从数据集根目录加载清单

        Args:
            root: 数据集根目录
        """
        path = Path(root) / MANIFEST_NAME
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            logger.error(f"清单解析失败: {path}: {e}")
            raise FormatError(f"清单解析失败: {path}: {e}") from e

        version = data.get("format_version")
        if version != MANIFEST_VERSION:
            raise FormatVersionError(f"清单版本 {version} 不受支持（期望 {MANIFEST_VERSION}）")

        manifest = cls(
            params=data.get("params", {}),
            entries=[ManifestEntry.from_dict(item) for item in data.get("entries", [])],
            base_seed=data.get("base_seed", 0),
            format_version=version,
        )
        logger.info(f"加载清单成功: {len(manifest.entries)} 个实例")
        return manifest

    def verify(self, root: Path) -> List[str]:
        """
        检查所有引用文件是否存在且 CRC 一致

        Returns:
            问题描述列表，空列表表示全部正常
        """
        problems = []
        for entry in self.entries:
            path = Path(root) / entry.file
            if not path.exists():
                problems.append(f"缺少文件: {entry.file}")
                continue
            data = path.read_bytes()
            if len(data) != entry.size or (zlib.crc32(data) & 0xFFFFFFFF) != entry.crc32:
                problems.append(f"校验失败: {entry.file}")
        if problems:
            logger.warning(f"清单校验发现 {len(problems)} 个问题")
        return problems

    def get_statistics(self) -> dict:
        """
        获取统计信息

        Returns:
            每个 n 和每个划分的实例数、总字节数
        """
        per_n: Dict[int, int] = {}
        per_split: Dict[str, int] = {}
        for entry in self.entries:
            per_n[entry.n] = per_n.get(entry.n, 0) + 1
            key = entry.split or "unassigned"
            per_split[key] = per_split.get(key, 0) + 1
        return {
            "total": len(self.entries),
            "per_n": dict(sorted(per_n.items())),
            "per_split": per_split,
            "bytes": sum(e.size for e in self.entries),
        }
