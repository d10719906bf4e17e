"""
实例文件编解码模块
.kcb 二进制格式：

    magic "KCB1" | 头长度 u32-LE | 头 (UTF-8 JSON) |
    图像负载 (相机 -> 时间步 -> 深度平面, 灰度平面; 每平面 HxW f32-LE 行优先) |
    轨迹 f32-LE (frames x n) | CRC32-LE (覆盖之前所有字节)
"""
import json
import logging
import struct
import zlib
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from errors import ChecksumMismatchError, FormatError, FormatVersionError

logger = logging.getLogger(__name__)

MAGIC = b"KCB1"
FORMAT_VERSION = 1
FILE_SUFFIX = ".kcb"

_U32 = struct.Struct("<I")


@dataclass(frozen=True)
class DecodedInstance:
    """解码后的原始内容"""
    header: Dict[str, Any]
    depth: np.ndarray       # (cameras, timesteps, H, W) float32
    gray: np.ndarray        # (cameras, timesteps, H, W) float32
    trajectory: np.ndarray  # (frames, n) float32
    payload_offset: int
    trajectory_offset: int


def _header_bytes(header: Dict[str, Any]) -> bytes:
    return json.dumps(header, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def encode_instance(header: Dict[str, Any], depth: np.ndarray, gray: np.ndarray,
                    trajectory: np.ndarray) -> bytes:
    """
    编码一个实例

    Args:
        header: 头部字段（id、seed、n、lengths、colors、相机参数、尺寸）
        depth: (C, T, H, W) 深度
        gray: (C, T, H, W) 灰度
        trajectory: (frames, n) 关节角

    Returns:
        完整文件内容
    """
    if depth.shape != gray.shape or depth.ndim != 4:
        raise FormatError(f"深度/灰度形状不一致: {depth.shape} vs {gray.shape}")

    header = dict(header)
    header["format_version"] = FORMAT_VERSION
    c, t, h, w = depth.shape
    header["dims"] = {"cameras": c, "timesteps": t, "height": h, "width": w}
    header["trajectory_shape"] = list(trajectory.shape)
    head = _header_bytes(header)

    planes = np.stack([depth, gray], axis=2).astype("<f4")
    parts = [
        MAGIC,
        _U32.pack(len(head)),
        head,
        planes.tobytes(order="C"),
        np.ascontiguousarray(trajectory, dtype="<f4").tobytes(order="C"),
    ]
    body = b"".join(parts)
    return body + _U32.pack(zlib.crc32(body) & 0xFFFFFFFF)


def payload_offsets(header_length: int, dims: Dict[str, int]) -> Dict[str, int]:
    """图像负载与轨迹在文件中的起始偏移"""
    payload = len(MAGIC) + _U32.size + header_length
    plane_bytes = dims["cameras"] * dims["timesteps"] * 2 * dims["height"] * dims["width"] * 4
    return {"payload_offset": payload, "trajectory_offset": payload + plane_bytes}


def decode_instance(data: bytes) -> DecodedInstance:
    """
    解码并校验一个实例文件

    Raises:
        FormatError: magic 不符
        ChecksumMismatchError: CRC 不符或文件被截断
        FormatVersionError: 版本不符
    """
    if len(data) < len(MAGIC) + 2 * _U32.size:
        raise ChecksumMismatchError(f"文件过短 ({len(data)} 字节)，可能被截断")
    if data[:4] != MAGIC:
        raise FormatError(f"magic 不匹配: {data[:4]!r}")

    body, tail = data[:-4], data[-4:]
    expected = _U32.unpack(tail)[0]
    actual = zlib.crc32(body) & 0xFFFFFFFF
    if expected != actual:
        raise ChecksumMismatchError(f"CRC32 不匹配: 期望 {expected:#010x}，实际 {actual:#010x}")

    header_len = _U32.unpack_from(body, 4)[0]
    head_end = 8 + header_len
    if head_end > len(body):
        raise ChecksumMismatchError("头部长度超出文件大小")
    try:
        header = json.loads(body[8:head_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"头部解析失败: {e}") from e

    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"格式版本 {version} 不受支持（期望 {FORMAT_VERSION}）")

    dims = header["dims"]
    c, t, h, w = dims["cameras"], dims["timesteps"], dims["height"], dims["width"]
    offsets = payload_offsets(header_len, dims)
    frames, n = header["trajectory_shape"]
    traj_end = offsets["trajectory_offset"] + frames * n * 4
    if traj_end != len(body):
        raise ChecksumMismatchError(f"负载长度不符: 期望 {traj_end} 字节，实际 {len(body)}")

    planes = np.frombuffer(body, dtype="<f4", count=c * t * 2 * h * w,
                           offset=offsets["payload_offset"]).reshape(c, t, 2, h, w)
    trajectory = np.frombuffer(body, dtype="<f4", count=frames * n,
                               offset=offsets["trajectory_offset"]).reshape(frames, n)

    return DecodedInstance(
        header=header,
        depth=planes[:, :, 0].astype(np.float32),
        gray=planes[:, :, 1].astype(np.float32),
        trajectory=trajectory.astype(np.float32),
        payload_offset=offsets["payload_offset"],
        trajectory_offset=offsets["trajectory_offset"],
    )
