"""
配置测试
"""
import logging
import math

import pytest
from pydantic import ValidationError

from cli import build_parser, resolve_config
from config import GenerationParams, RunConfig, TrainConfig, setup_logging


def test_generation_defaults():
    params = GenerationParams()
    assert (params.frames, params.rig_size, params.img_w, params.img_h) == (100, 8, 128, 96)
    assert params.fov_y == pytest.approx(math.radians(75.0))
    assert not params.ground_plane and params.depth_noise_std == 0.0


def test_generation_validation():
    with pytest.raises(ValidationError):
        GenerationParams(near=5.0, far=1.0)
    with pytest.raises(ValidationError):
        GenerationParams(joint_min=1.0, joint_max=-1.0)
    with pytest.raises(ValidationError):
        GenerationParams(light_dir=(0.0, 0.0, 0.0))
    with pytest.raises(ValidationError):
        GenerationParams(frames=0)
    with pytest.raises(ValidationError):
        GenerationParams().frames = 3


def test_desk_profile():
    desk = GenerationParams.desk(frames=10)
    assert (desk.img_w, desk.img_h, desk.frames) == (64, 48, 10)
    cfg = resolve_config(build_parser().parse_args(["generate", "--desk"]))
    assert (cfg.generation.img_w, cfg.generation.img_h) == (64, 48)
    cfg = resolve_config(build_parser().parse_args(["generate", "--desk", "--res", "32x24"]))
    assert (cfg.generation.img_w, cfg.generation.img_h) == (32, 24)


def test_run_config_consistency():
    assert RunConfig(command="generate").fractions == (0.6, 0.1, 0.3)
    with pytest.raises(ValidationError):
        RunConfig(command="generate", fractions=(0.6, 0.6, 0.3))
    with pytest.raises(ValidationError):
        RunConfig(command="train", n=7)
    with pytest.raises(ValidationError):
        RunConfig(command="inspect")
    with pytest.raises(ValidationError):
        TrainConfig(momentum=1.0)
    assert TrainConfig().timestep_stride == 1
    assert RunConfig(command="eval", seeds=(0, 1)).seeds == (0, 1)
    with pytest.raises(ValidationError):
        RunConfig(command="eval", seeds=())
    with pytest.raises(ValidationError):
        RunConfig(command="eval", seeds=(2, 2))


def test_setup_logging_writes_file(tmp_path):
    log_file = tmp_path / "logs" / "run.log"
    setup_logging("DEBUG", log_file)
    logging.getLogger("linkbench.test").debug("hello")
    for handler in logging.getLogger().handlers:
        handler.flush()
    assert "hello" in log_file.read_text(encoding="utf-8")
    setup_logging("WARNING", log_file)
    assert logging.getLogger().level == logging.WARNING
