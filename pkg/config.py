"""
配置管理模块
加载和管理应用程序配置、生成参数与训练参数
"""
import logging
import math
import os
from pathlib import Path
from typing import Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator, model_validator

# 加载环境变量
load_dotenv()


class Config:
    """应用程序配置类"""

    # 项目根目录
    BASE_DIR = Path(__file__).parent

    # 应用配置
    APP_NAME = os.getenv("APP_NAME", "linkbench")
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
    DEFAULT_JOBS = int(os.getenv("DEFAULT_JOBS", "1"))

    # 目录配置
    DATA_ROOT = Path(os.getenv("LINKBENCH_DATA_ROOT", str(BASE_DIR / "data")))
    CACHE_DIR = BASE_DIR / os.getenv("CACHE_DIR", "./cache")
    OUTPUT_DIR = BASE_DIR / os.getenv("OUTPUT_DIR", "./output")
    LOG_FILE = Path(os.getenv("LOG_FILE", str(CACHE_DIR / "linkbench.log")))

    @classmethod
    def init_directories(cls):
        """初始化必要的目录"""
        for directory in [cls.CACHE_DIR, cls.OUTPUT_DIR]:
            directory.mkdir(parents=True, exist_ok=True)


def setup_logging(level: Optional[str] = None, log_file: Optional[Path] = None):
    """
    配置日志：同时输出到文件和终端

    Args:
        level: 日志级别，默认取 Config.LOG_LEVEL
        log_file: 日志文件路径，默认取 Config.LOG_FILE
    """
    log_file = Path(log_file or Config.LOG_FILE)
    log_file.parent.mkdir(parents=True, exist_ok=True)

    logging.basicConfig(
        level=getattr(logging, (level or Config.LOG_LEVEL).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file, encoding='utf-8'),
            logging.StreamHandler()
        ],
        force=True,
    )


class GenerationParams(BaseModel):
    """数据生成参数（相机阵列、渲染、运动）"""

    model_config = {"frozen": True}

    frames: int = Field(100, ge=1)
    fps: float = Field(10.0, gt=0)
    rig_size: int = Field(8, ge=1)
    img_w: int = Field(128, ge=1)
    img_h: int = Field(96, ge=1)
    rig_radius: float = Field(4.0, gt=0)
    rig_height: float = 1.5
    target: Tuple[float, float, float] = (0.75, 0.0, 0.0)
    fov_y_deg: float = Field(75.0, gt=0, lt=180)
    near: float = Field(0.1, gt=0)
    far: float = Field(10.0, gt=0)
    link_radius: float = Field(0.05, gt=0)
    joint_min: float = -2.5
    joint_max: float = 2.5
    max_speed: float = Field(1.0, gt=0)
    waypoint_spacing: int = Field(20, ge=1)
    ground_plane: bool = False
    ambient: float = Field(0.1, ge=0, le=1)
    light_dir: Tuple[float, float, float] = (0.3, 0.2, 1.0)
    depth_noise_std: float = Field(0.0, ge=0)

    @field_validator("light_dir")
    @classmethod
    def _check_light(cls, v):
        norm = math.sqrt(sum(c * c for c in v))
        if norm == 0:
            raise ValueError("light_dir 不能为零向量")
        return v

    @model_validator(mode="after")
    def _check_ranges(self):
        if self.far <= self.near:
            raise ValueError(f"far ({self.far}) 必须大于 near ({self.near})")
        if self.joint_min >= self.joint_max:
            raise ValueError("joint_min 必须小于 joint_max")
        return self

    @classmethod
    def desk(cls, **overrides) -> "GenerationParams":
        """桌面规模配置：64x48 分辨率"""
        values = {"img_w": 64, "img_h": 48}
        values.update(overrides)
        return cls(**values)

    @property
    def fov_y(self) -> float:
        return math.radians(self.fov_y_deg)


class TrainConfig(BaseModel):
    """训练参数"""

    model_config = {"frozen": True}

    epochs: int = Field(30, ge=0)
    batch_size: int = Field(16, ge=1)
    lr: float = Field(1e-3, ge=0)
    optimizer: Literal["adam", "sgd"] = "adam"
    momentum: float = Field(0.9, ge=0, lt=1)
    seed: int = 0
    depth_scale: float = Field(10.0, gt=0)
    deterministic: bool = True
    timestep_stride: int = Field(1, ge=1)  # 大于 1 时只取部分时间步（桌面规模可选）


class RunConfig(BaseModel):
    """命令行运行配置（所有默认值都已具体化）"""

    command: Literal["generate", "train", "eval", "inspect"]
    data_dir: Path = Config.DATA_ROOT
    out_dir: Path = Config.OUTPUT_DIR
    seed: int = 0
    deterministic: bool = True
    jobs: int = Field(Config.DEFAULT_JOBS, ge=1)
    per_n: int = Field(10, ge=1)
    fractions: Tuple[float, float, float] = (0.6, 0.1, 0.3)
    generation: GenerationParams = GenerationParams()
    train: TrainConfig = TrainConfig()
    archs: Tuple[str, ...] = ("CONV3D-Depth-MV",)
    tasks: Tuple[str, ...] = ("count",)
    n: Optional[int] = None
    instance_id: Optional[str] = None
    timestep: int = Field(0, ge=0)
    formats: Tuple[str, ...] = ("csv", "text")
    seeds: Optional[Tuple[int, ...]] = None  # eval 多种子平均，None 时只用 --seed

    @model_validator(mode="after")
    def _check_consistency(self):
        if abs(sum(self.fractions) - 1.0) > 1e-9 or min(self.fractions) < 0:
            raise ValueError(f"划分比例之和必须为1: {self.fractions}")
        if (self.command in ("train", "eval") and self.generation.rig_size < 2
                and any(a.upper().endswith("-MV") for a in self.archs)):
            raise ValueError("多视角模式要求相机数量 >= 2")
        if self.n is not None and not 1 <= self.n <= 6:
            raise ValueError(f"n 必须在 1..6 之间: {self.n}")
        if self.command == "inspect" and not self.instance_id:
            raise ValueError("inspect 命令需要 --id")
        if self.seeds is not None and (not self.seeds or len(set(self.seeds)) != len(self.seeds)):
            raise ValueError(f"--seeds 必须是不重复的非空列表: {self.seeds}")
        return self

    def effective_line(self) -> str:
        """打印用的有效配置（一行JSON）"""
        return self.model_dump_json()
