"""
测试公共夹具
小尺寸的生成参数和一个会话级的小数据集
"""
import shutil

import numpy as np
import pytest

from config import GenerationParams
from dataset import generate_dataset
from manifest import DatasetManifest


@pytest.fixture(scope="session")
def small_params():
    """4 帧、2 台相机、15x11 图像"""
    return GenerationParams(frames=4, rig_size=2, img_w=15, img_h=11, waypoint_spacing=2)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory, small_params):
    """每个 n 两个实例，train/test 各一个"""
    root = tmp_path_factory.mktemp("tiny_dataset")
    manifest = generate_dataset(root, per_n=2, params=small_params, seed=7, fractions=(0.5, 0.0, 0.5))
    return root, manifest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tmp_dataset_copy(tiny_dataset, tmp_path):
    """可随意破坏的小数据集副本"""
    root, manifest = tiny_dataset
    copy_root = tmp_path / "dataset"
    shutil.copytree(root, copy_root)
    return copy_root, DatasetManifest.load(copy_root)
