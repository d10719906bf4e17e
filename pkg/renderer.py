"""
渲染模块
用光线投射为相机阵列生成深度图和灰度图
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numba import njit

from chain import PALETTE_LUMA, ChainConfig, LinkPoses
from errors import InvalidArgumentError

logger = logging.getLogger(__name__)

DEFAULT_RIG_SIZE = 8
DEFAULT_RIG_RADIUS = 4.0
DEFAULT_RIG_HEIGHT = 1.5
DEFAULT_TARGET = (0.75, 0.0, 0.0)
DEFAULT_FOV_Y = math.radians(75.0)
DEFAULT_NEAR = 0.1
DEFAULT_FAR = 10.0
DEFAULT_LINK_RADIUS = 0.05
DEFAULT_LIGHT = (0.3, 0.2, 1.0)
DEFAULT_AMBIENT = 0.1
GROUND_LUMA = 0.5


@dataclass(frozen=True)
class Camera:
    """针孔相机：外参（位置、注视点、上方向）与内参（视场角、分辨率、裁剪面）"""
    position: Tuple[float, float, float]
    look_at: Tuple[float, float, float]
    up: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    fov_y: float = DEFAULT_FOV_Y
    width: int = 128
    height: int = 96
    near: float = DEFAULT_NEAR
    far: float = DEFAULT_FAR

    def __post_init__(self):
        if not self.near > 0:
            raise InvalidArgumentError(f"near 必须为正: {self.near}")
        if not self.far > self.near:
            raise InvalidArgumentError(f"far ({self.far}) 必须大于 near ({self.near})")
        if self.width < 1 or self.height < 1:
            raise InvalidArgumentError(f"分辨率无效: {self.width}x{self.height}")
        if not 0 < self.fov_y < math.pi:
            raise InvalidArgumentError(f"fov_y 必须在 (0, pi) 内: {self.fov_y}")

    @property
    def focal(self) -> float:
        """以像素计的焦距"""
        return (self.height / 2.0) / math.tan(self.fov_y / 2.0)


@dataclass(frozen=True)
class Capsule:
    """连杆几何体：线段扫掠球"""
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    radius: float = DEFAULT_LINK_RADIUS
    color: str = "white"


@dataclass(frozen=True)
class Scene:
    """摆好姿态的链条（胶囊体列表）和可选地面"""
    capsules: Tuple[Capsule, ...] = ()
    ground_plane: bool = False
    ground_z: float = -DEFAULT_LINK_RADIUS


class Projection(NamedTuple):
    row: float
    col: float
    depth: float


def build_scene(
    config: ChainConfig,
    poses: LinkPoses,
    radius: float = DEFAULT_LINK_RADIUS,
    ground_plane: bool = False,
) -> Scene:
    """由链条配置和端点构造场景，胶囊数 = n+1"""
    capsules = tuple(
        Capsule(a=np.asarray(a, dtype=np.float64), b=np.asarray(b, dtype=np.float64),
                radius=radius, color=color)
        for (a, b), color in zip(poses.link_segments(), config.colors)
    )
    return Scene(capsules=capsules, ground_plane=ground_plane, ground_z=-radius)


def default_rig(
    count: int = DEFAULT_RIG_SIZE,
    radius: float = DEFAULT_RIG_RADIUS,
    height: float = DEFAULT_RIG_HEIGHT,
    img_w: int = 128,
    img_h: int = 96,
    target: Sequence[float] = DEFAULT_TARGET,
    fov_y: float = DEFAULT_FOV_Y,
    near: float = DEFAULT_NEAR,
    far: float = DEFAULT_FAR,
) -> List[Camera]:
    """
    构造环形相机阵列

    相机在以根点为圆心的水平圆上等方位角分布（第0台在 +x 方向），全部注视同一目标点。

    Args:
        count: 相机数量
        radius: 圆半径（米）
        height: 相机高度（米）
        img_w: 图像宽度
        img_h: 图像高度

    Returns:
        Camera 列表
    """
    if count < 1:
        raise InvalidArgumentError(f"相机数量必须 >= 1: {count}")
    if not radius > 0:
        raise InvalidArgumentError(f"相机阵列半径必须为正: {radius}")

    look_at = tuple(float(v) for v in target)
    cameras = []
    for k in range(count):
        azimuth = 2.0 * math.pi * k / count
        position = (radius * math.cos(azimuth), radius * math.sin(azimuth), float(height))
        cameras.append(Camera(position=position, look_at=look_at, fov_y=fov_y,
                              width=img_w, height=img_h, near=near, far=far))
    return cameras


def camera_basis(cam: Camera) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """相机坐标系：(前, 右, 上) 三个单位向量"""
    forward = np.asarray(cam.look_at, dtype=np.float64) - np.asarray(cam.position, dtype=np.float64)
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise InvalidArgumentError("相机位置与注视点重合")
    forward = forward / norm
    right = np.cross(forward, np.asarray(cam.up, dtype=np.float64))
    rnorm = np.linalg.norm(right)
    if rnorm == 0:
        raise InvalidArgumentError("up 向量与视线平行")
    right = right / rnorm
    up = np.cross(right, forward)
    return forward, right, up


def project(cam: Camera, p: Sequence[float]) -> Optional[Projection]:
    """
    针孔投影

    Args:
        cam: 相机
        p: 世界坐标点

    Returns:
        (行, 列, 沿光线的距离)，点在相机后方时返回 None
    """
    forward, right, up = camera_basis(cam)
    d = np.asarray(p, dtype=np.float64) - np.asarray(cam.position, dtype=np.float64)
    z = float(d @ forward)
    if z <= 0:
        return None
    x = float(d @ right)
    y = float(d @ up)
    f = cam.focal
    col = cam.width / 2.0 + f * x / z
    row = cam.height / 2.0 - f * y / z
    return Projection(row=row, col=col, depth=float(np.linalg.norm(d)))


def pixel_rays(cam: Camera) -> np.ndarray:
    """每个像素中心的单位光线方向，形状 (H*W, 3)，行优先"""
    forward, right, up = camera_basis(cam)
    f = cam.focal
    cols = (np.arange(cam.width) + 0.5 - cam.width / 2.0) / f
    rows = (cam.height / 2.0 - (np.arange(cam.height) + 0.5)) / f
    yy, xx = np.meshgrid(rows, cols, indexing="ij")
    dirs = forward[None, :] + xx.reshape(-1, 1) * right[None, :] + yy.reshape(-1, 1) * up[None, :]
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return np.ascontiguousarray(dirs)


def pixel_ray(cam: Camera, row: int, col: int) -> np.ndarray:
    """单个像素的光线方向"""
    if not (0 <= row < cam.height and 0 <= col < cam.width):
        raise IndexError(f"像素 ({row}, {col}) 超出图像范围")
    return pixel_rays(cam)[row * cam.width + col]


@njit
def _sphere_entry(ox, oy, oz, dx, dy, dz, cx, cy, cz, r):
    # 返回射线首次进入球体的参数 t，无交点返回 -1
    px = ox - cx
    py = oy - cy
    pz = oz - cz
    b = dx * px + dy * py + dz * pz
    c = px * px + py * py + pz * pz - r * r
    h = b * b - c
    if h < 0.0:
        return -1.0
    return -b - math.sqrt(h)


@njit
def _capsule_entry(ox, oy, oz, dx, dy, dz, ax, ay, az, bx, by, bz, r, t_min):
    best = math.inf
    bax = bx - ax
    bay = by - ay
    baz = bz - az
    baba = bax * bax + bay * bay + baz * baz
    if baba > 1e-18:
        oax = ox - ax
        oay = oy - ay
        oaz = oz - az
        bard = bax * dx + bay * dy + baz * dz
        baoa = bax * oax + bay * oay + baz * oaz
        rdoa = dx * oax + dy * oay + dz * oaz
        oaoa = oax * oax + oay * oay + oaz * oaz
        qa = baba - bard * bard
        if qa > 1e-12:
            qb = baba * rdoa - baoa * bard
            qc = baba * oaoa - baoa * baoa - r * r * baba
            h = qb * qb - qa * qc
            if h >= 0.0:
                t = (-qb - math.sqrt(h)) / qa
                y = baoa + t * bard
                if y > 0.0 and y < baba and t >= t_min:
                    best = t
    t = _sphere_entry(ox, oy, oz, dx, dy, dz, ax, ay, az, r)
    if t >= t_min and t < best:
        best = t
    if baba > 1e-18:
        t = _sphere_entry(ox, oy, oz, dx, dy, dz, bx, by, bz, r)
        if t >= t_min and t < best:
            best = t
    return best


@njit
def _trace_kernel(origin, dirs, seg_a, seg_b, radii, near, far, plane_on, plane_z):
    n_rays = dirs.shape[0]
    n_caps = seg_a.shape[0]
    depth = np.full(n_rays, far)
    hit_id = np.full(n_rays, -1, dtype=np.int64)
    normals = np.zeros((n_rays, 3))
    ox = origin[0]
    oy = origin[1]
    oz = origin[2]
    for p in range(n_rays):
        dx = dirs[p, 0]
        dy = dirs[p, 1]
        dz = dirs[p, 2]
        best = far
        best_id = -1
        for k in range(n_caps):
            t = _capsule_entry(ox, oy, oz, dx, dy, dz,
                               seg_a[k, 0], seg_a[k, 1], seg_a[k, 2],
                               seg_b[k, 0], seg_b[k, 1], seg_b[k, 2],
                               radii[k], near)
            if t < best:
                best = t
                best_id = k
        if plane_on and dz < 0.0:
            t = (plane_z - oz) / dz
            if t >= near and t < best:
                best = t
                best_id = n_caps
        if best_id < 0:
            continue
        depth[p] = best
        hit_id[p] = best_id
        hx = ox + best * dx
        hy = oy + best * dy
        hz = oz + best * dz
        if best_id == n_caps:
            normals[p, 2] = 1.0
            continue
        # 法向：命中点减去其在线段上的最近点
        bax = seg_b[best_id, 0] - seg_a[best_id, 0]
        bay = seg_b[best_id, 1] - seg_a[best_id, 1]
        baz = seg_b[best_id, 2] - seg_a[best_id, 2]
        baba = bax * bax + bay * bay + baz * baz
        s = 0.0
        if baba > 1e-18:
            s = ((hx - seg_a[best_id, 0]) * bax + (hy - seg_a[best_id, 1]) * bay
                 + (hz - seg_a[best_id, 2]) * baz) / baba
            s = min(max(s, 0.0), 1.0)
        nx = hx - (seg_a[best_id, 0] + s * bax)
        ny = hy - (seg_a[best_id, 1] + s * bay)
        nz = hz - (seg_a[best_id, 2] + s * baz)
        nn = math.sqrt(nx * nx + ny * ny + nz * nz)
        if nn > 0.0:
            normals[p, 0] = nx / nn
            normals[p, 1] = ny / nn
            normals[p, 2] = nz / nn
    return depth, hit_id, normals


def _scene_arrays(scene: Scene):
    k = len(scene.capsules)
    seg_a = np.zeros((k, 3))
    seg_b = np.zeros((k, 3))
    radii = np.zeros(k)
    for i, cap in enumerate(scene.capsules):
        seg_a[i] = cap.a
        seg_b[i] = cap.b
        radii[i] = cap.radius
    return seg_a, seg_b, radii


def trace_scene(scene: Scene, cam: Camera, dirs: Optional[np.ndarray] = None):
    """
    对整幅图像做光线求交

    Returns:
        (depth, hit_id, normals)：未命中像素深度为 far、hit_id 为 -1；地面的 hit_id 为胶囊数
    """
    if dirs is None:
        dirs = pixel_rays(cam)
    seg_a, seg_b, radii = _scene_arrays(scene)
    origin = np.asarray(cam.position, dtype=np.float64)
    return _trace_kernel(origin, dirs, seg_a, seg_b, radii,
                         float(cam.near), float(cam.far),
                         bool(scene.ground_plane), float(scene.ground_z))


def cast_ray(scene: Scene, origin: Sequence[float], direction: Sequence[float],
             near: float = DEFAULT_NEAR, far: float = DEFAULT_FAR) -> float:
    """单条光线的最近命中距离，未命中返回 far"""
    d = np.asarray(direction, dtype=np.float64)
    d = (d / np.linalg.norm(d)).reshape(1, 3)
    seg_a, seg_b, radii = _scene_arrays(scene)
    depth, _, _ = _trace_kernel(np.asarray(origin, dtype=np.float64), np.ascontiguousarray(d),
                                seg_a, seg_b, radii, float(near), float(far),
                                bool(scene.ground_plane), float(scene.ground_z))
    return float(depth[0])


def render_depth(scene: Scene, cam: Camera) -> np.ndarray:
    """
    渲染深度图

    Returns:
        H x W 数组，值为沿视线到首个表面的距离，未命中为 far
    """
    depth, _, _ = trace_scene(scene, cam)
    return depth.reshape(cam.height, cam.width)


def render_gray(
    scene: Scene,
    cam: Camera,
    light_dir: Sequence[float] = DEFAULT_LIGHT,
    ambient: float = DEFAULT_AMBIENT,
) -> np.ndarray:
    """
    渲染灰度图：亮度 x max(0, 法向·光照) + 环境光，背景为 1.0

    Returns:
        H x W 数组，取值 [0, 1]
    """
    _, hit_id, normals = trace_scene(scene, cam)
    return shade_hits(scene, hit_id, normals, light_dir, ambient).reshape(cam.height, cam.width)


def render_views(
    scene: Scene,
    cam: Camera,
    light_dir: Sequence[float] = DEFAULT_LIGHT,
    ambient: float = DEFAULT_AMBIENT,
) -> Tuple[np.ndarray, np.ndarray]:
    """一次求交同时得到深度图和灰度图"""
    depth, hit_id, normals = trace_scene(scene, cam)
    gray = shade_hits(scene, hit_id, normals, light_dir, ambient)
    return depth.reshape(cam.height, cam.width), gray.reshape(cam.height, cam.width)


def shade_hits(scene, hit_id, normals, light_dir, ambient) -> np.ndarray:
    light = np.asarray(light_dir, dtype=np.float64)
    light = light / np.linalg.norm(light)
    luma = np.array([PALETTE_LUMA[c.color] for c in scene.capsules] + [GROUND_LUMA])
    gray = np.ones(hit_id.shape[0])
    hit = hit_id >= 0
    lambert = np.maximum(0.0, normals[hit] @ light)
    gray[hit] = np.clip(luma[hit_id[hit]] * lambert + ambient, 0.0, 1.0)
    return gray


def apply_depth_noise(depth: np.ndarray, std: float, rng: np.random.Generator,
                      near: float, far: float) -> np.ndarray:
    """传感器噪声钩子：仅对命中像素叠加高斯噪声，std=0 时原样返回"""
    if std <= 0:
        return depth
    noisy = depth.copy()
    hit = depth < far
    noisy[hit] = np.clip(depth[hit] + rng.normal(0.0, std, size=int(hit.sum())), near, far)
    return noisy


def depth_to_u8(depth: np.ndarray, near: float, far: float) -> np.ndarray:
    """深度线性映射 [near, far] -> [0, 255]"""
    scaled = (np.asarray(depth, dtype=np.float64) - near) / (far - near) * 255.0
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def gray_to_u8(gray: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(gray, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path: Path, image: np.ndarray):
    """写出二进制 PGM (P5, maxval 255, 行优先)"""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise InvalidArgumentError(f"PGM 只支持二维图像: {image.shape}")
    h, w = image.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(image).tobytes())
    logger.debug(f"PGM 已写出: {path}")
