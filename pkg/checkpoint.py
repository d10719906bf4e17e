"""
模型检查点模块
二进制格式：

    magic "KNN1" | 头长度 u32-LE | 头 (UTF-8 JSON: 层描述、输入形状、参数形状、
    训练种子、轮次、元数据) | 参数 f32-LE（按 parameters() 顺序） | CRC32-LE
"""
import json
import logging
import os
import struct
import zlib
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from errors import ChecksumMismatchError, FormatError, FormatVersionError
from nn_layers import ModelGraph

logger = logging.getLogger(__name__)

MAGIC = b"KNN1"
FORMAT_VERSION = 1
FILE_SUFFIX = ".knn"

_U32 = struct.Struct("<I")


def encode_checkpoint(graph: ModelGraph, metadata: Optional[Dict[str, Any]] = None,
                      seed: int = 0, epoch: int = 0) -> bytes:
    """序列化网络结构与参数"""
    params = graph.parameters()
    header = {
        "format_version": FORMAT_VERSION,
        "input_shape": list(graph.input_shape),
        "layers": graph.specs(),
        "param_shapes": [list(p.shape) for p in params],
        "training_seed": int(seed),
        "epoch": int(epoch),
        "metadata": metadata or {},
    }
    head = json.dumps(header, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(p.data, dtype="<f4").tobytes() for p in params)
    body = MAGIC + _U32.pack(len(head)) + head + payload
    return body + _U32.pack(zlib.crc32(body) & 0xFFFFFFFF)


def decode_checkpoint(data: bytes) -> Tuple[ModelGraph, Dict[str, Any]]:
    """
    反序列化检查点

    Returns:
        (graph, header)
    """
    if len(data) < len(MAGIC) + 2 * _U32.size:
        raise ChecksumMismatchError(f"检查点过短 ({len(data)} 字节)")
    if data[:4] != MAGIC:
        raise FormatError(f"检查点 magic 不匹配: {data[:4]!r}")
    body = data[:-4]
    if (zlib.crc32(body) & 0xFFFFFFFF) != _U32.unpack(data[-4:])[0]:
        raise ChecksumMismatchError("检查点 CRC32 不匹配")

    head_len = _U32.unpack_from(body, 4)[0]
    try:
        header = json.loads(body[8:8 + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"检查点头部解析失败: {e}") from e
    if header.get("format_version") != FORMAT_VERSION:
        raise FormatVersionError(f"检查点版本 {header.get('format_version')} 不受支持")

    graph = ModelGraph.from_specs(header["layers"], header["input_shape"], seed=header.get("training_seed", 0))
    params = graph.parameters()
    shapes = [tuple(s) for s in header["param_shapes"]]
    if [p.shape for p in params] != shapes:
        raise FormatError("检查点参数形状与层描述不一致")

    offset = 8 + head_len
    expected = offset + 4 * sum(int(np.prod(s)) for s in shapes)
    if expected != len(body):
        raise ChecksumMismatchError(f"检查点参数长度不符: 期望 {expected}，实际 {len(body)}")
    for p, shape in zip(params, shapes):
        count = int(np.prod(shape))
        p.data = np.frombuffer(body, dtype="<f4", count=count, offset=offset).reshape(shape).astype(np.float32)
        p.grad = np.zeros_like(p.data)
        offset += 4 * count
    return graph, header


def save_checkpoint(path: Path, graph: ModelGraph, metadata: Optional[Dict[str, Any]] = None,
                    seed: int = 0, epoch: int = 0) -> Path:
    """
    写入检查点（先写临时文件再替换）

    Args:
        path: 目标路径
        graph: 网络
        metadata: 估计器元数据（kind/arch/mode/modality/n 等）
        seed: 训练种子
        epoch: 已完成轮次
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(graph, metadata, seed, epoch))
    os.replace(tmp, path)
    logger.info(f"检查点已保存: {path} ({graph.param_count()} 个参数)")
    return path


def load_checkpoint(path: Path) -> Tuple[ModelGraph, Dict[str, Any]]:
    """读取检查点"""
    path = Path(path)
    try:
        return decode_checkpoint(path.read_bytes())
    except FormatError as e:
        logger.error(f"检查点读取失败: {path}: {e}")
        raise
