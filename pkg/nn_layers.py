"""
神经网络层模块
纯 numpy 实现的顺序网络：卷积、池化、全连接、激活、LSTM 及其反向传播

张量布局统一为 channels-last：
    conv3d 输入 B x D x H x W x C
    conv2d 输入 B x H x W x C
    lstm   输入 B x T x F
"""
import copy
import logging
from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from errors import InvalidArgumentError

logger = logging.getLogger(__name__)

DEFAULT_DTYPE = np.float32

_SPATIAL = "xyz"
_KERNEL = "ijk"


class Tensor:
    """参数张量：数值与同形状的梯度缓冲"""

    def __init__(self, data: np.ndarray, name: str = ""):
        self.data = np.asarray(data)
        self.grad = np.zeros_like(self.data)
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def zero_grad(self):
        self.grad[...] = 0

    def astype(self, dtype):
        """原地转换精度"""
        self.data = self.data.astype(dtype)
        self.grad = self.grad.astype(dtype)

    def __repr__(self):
        return f"Tensor({self.name}, shape={self.shape}, dtype={self.data.dtype})"


def _as_tuple(value, nd: int, what: str) -> Tuple[int, ...]:
    if isinstance(value, (int, np.integer)):
        return (int(value),) * nd
    value = tuple(int(v) for v in value)
    if len(value) != nd:
        raise InvalidArgumentError(f"{what} 维数应为 {nd}: {value}")
    return value


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# ---------------------------------------------------------------------------
# 函数式前向/反向
# ---------------------------------------------------------------------------

def conv_forward(x: np.ndarray, w: np.ndarray, b: Optional[np.ndarray] = None,
                 stride=1, padding=0):
    """
    N 维互相关（N = w.ndim - 2）

    Args:
        x: B x S1..SN x Cin
        w: Cout x K1..KN x Cin
        b: Cout 偏置，可为 None
        stride: 步长（整数或每轴元组）
        padding: 零填充（整数或每轴元组）

    Returns:
        (y, cache)，y 形状 B x S1'..SN' x Cout
    """
    nd = w.ndim - 2
    if nd not in (1, 2, 3):
        raise InvalidArgumentError(f"不支持的卷积维数: {nd}")
    if x.ndim != nd + 2:
        raise InvalidArgumentError(f"输入维数 {x.ndim} 与 {nd}D 卷积核不符")
    if x.shape[-1] != w.shape[-1]:
        raise InvalidArgumentError(f"输入通道 {x.shape[-1]} 与卷积核通道 {w.shape[-1]} 不符")
    if b is not None and b.shape != (w.shape[0],):
        raise InvalidArgumentError(f"偏置形状 {b.shape} 与输出通道 {w.shape[0]} 不符")

    stride = _as_tuple(stride, nd, "stride")
    padding = _as_tuple(padding, nd, "padding")
    kernel = w.shape[1:-1]
    for s, k, p in zip(x.shape[1:-1], kernel, padding):
        if s + 2 * p < k:
            raise InvalidArgumentError(f"卷积核 {kernel} 大于填充后的输入 {x.shape[1:-1]}")

    if any(padding):
        xp = np.pad(x, ((0, 0),) + tuple((p, p) for p in padding) + ((0, 0),))
    else:
        xp = x
    windows = sliding_window_view(xp, kernel, axis=tuple(range(1, nd + 1)))
    windows = windows[(slice(None),) + tuple(slice(None, None, s) for s in stride)]

    sp, kk = _SPATIAL[:nd], _KERNEL[:nd]
    y = np.einsum(f"b{sp}c{kk},o{kk}c->b{sp}o", windows, w, optimize=True)
    if b is not None:
        y = y + b
    cache = (x.shape, xp.shape, windows, w, stride, padding)
    return y, cache


def conv_backward(dy: np.ndarray, cache):
    """
    卷积反向传播

    Returns:
        (dx, dw, db)
    """
    x_shape, xp_shape, windows, w, stride, padding = cache
    nd = len(stride)
    sp, kk = _SPATIAL[:nd], _KERNEL[:nd]

    dw = np.einsum(f"b{sp}c{kk},b{sp}o->o{kk}c", windows, dy, optimize=True)
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))

    dxp = np.zeros(xp_shape, dtype=np.result_type(dy, w))
    out = dy.shape[1:-1]
    for offset in np.ndindex(*w.shape[1:-1]):
        target = (slice(None),) + tuple(
            slice(o, o + s * (n - 1) + 1, s) for o, s, n in zip(offset, stride, out)
        ) + (slice(None),)
        dxp[target] += dy @ w[(slice(None),) + offset + (slice(None),)]

    crop = (slice(None),) + tuple(
        slice(p, p + s) for p, s in zip(padding, x_shape[1:-1])
    ) + (slice(None),)
    return dxp[crop], dw, db


def conv3d(x: np.ndarray, kernels: np.ndarray, bias: Optional[np.ndarray] = None,
           stride=1, padding=0) -> np.ndarray:
    """三维互相关，输入 B x D x H x W x Cin，卷积核 Cout x kd x kh x kw x Cin"""
    if kernels.ndim != 5:
        raise InvalidArgumentError(f"conv3d 卷积核应为 5 维: {kernels.shape}")
    return conv_forward(x, kernels, bias, stride, padding)[0]


def conv2d(x: np.ndarray, kernels: np.ndarray, bias: Optional[np.ndarray] = None,
           stride=1, padding=0) -> np.ndarray:
    """二维互相关，输入 B x H x W x Cin，卷积核 Cout x kh x kw x Cin"""
    if kernels.ndim != 4:
        raise InvalidArgumentError(f"conv2d 卷积核应为 4 维: {kernels.shape}")
    return conv_forward(x, kernels, bias, stride, padding)[0]


def _pool_view(x: np.ndarray, pool: Tuple[int, ...]):
    nd = len(pool)
    batch, channels = x.shape[0], x.shape[-1]
    out = tuple(s // p for s, p in zip(x.shape[1:-1], pool))
    cropped = x[(slice(None),) + tuple(slice(0, o * p) for o, p in zip(out, pool)) + (slice(None),)]
    split = (batch,) + tuple(v for o, p in zip(out, pool) for v in (o, p)) + (channels,)
    perm = (0,) + tuple(1 + 2 * i for i in range(nd)) + (2 * nd + 1,) + tuple(2 + 2 * i for i in range(nd))
    windows = cropped.reshape(split).transpose(perm).reshape((batch,) + out + (channels, -1))
    return windows, out, perm, cropped.shape


def maxpool_forward(x: np.ndarray, pool: Sequence[int]):
    """
    最大池化（floor 模式，步长等于窗口）

    Returns:
        (y, cache)
    """
    pool = tuple(int(p) for p in pool)
    if x.ndim != len(pool) + 2:
        raise InvalidArgumentError(f"池化窗口 {pool} 与输入形状 {x.shape} 不符")
    if any(s < p for s, p in zip(x.shape[1:-1], pool)):
        raise InvalidArgumentError(f"池化窗口 {pool} 大于输入 {x.shape[1:-1]}")
    windows, out, perm, cropped_shape = _pool_view(x, pool)
    idx = np.argmax(windows, axis=-1)
    y = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return y, (x.shape, pool, idx, perm, cropped_shape, windows.shape)


def maxpool_backward(dy: np.ndarray, cache) -> np.ndarray:
    x_shape, pool, idx, perm, cropped_shape, windows_shape = cache
    dwin = np.zeros(windows_shape, dtype=dy.dtype)
    np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=-1)
    dwin = dwin.reshape(windows_shape[:-1] + pool).transpose(np.argsort(perm)).reshape(cropped_shape)
    dx = np.zeros(x_shape, dtype=dy.dtype)
    dx[tuple(slice(0, s) for s in cropped_shape)] = dwin
    return dx


def _lstm_forward(x, h, c, W, b):
    hidden = h.shape[-1]
    xh = np.concatenate([x, h], axis=-1)
    z = xh @ W + b
    i = _sigmoid(z[..., :hidden])
    f = _sigmoid(z[..., hidden:2 * hidden])
    o = _sigmoid(z[..., 2 * hidden:3 * hidden])
    g = np.tanh(z[..., 3 * hidden:])
    c_next = f * c + i * g
    tc = np.tanh(c_next)
    h_next = o * tc
    return h_next, c_next, (xh, c, i, f, o, g, tc)


def lstm_step(x: np.ndarray, state: Tuple[np.ndarray, np.ndarray], W: np.ndarray,
              b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    单步 LSTM 单元

    门的排列顺序为 输入 i、遗忘 f、输出 o、候选 g：
        z = [x, h] W + b
        c' = f * c + i * g
        h' = o * tanh(c')

    Args:
        x: (..., F) 输入
        state: (h, c)，形状均为 (..., H)
        W: (F + H, 4H) 权重
        b: (4H,) 偏置

    Returns:
        (h', c')
    """
    h, c = state
    x, h, c, W, b = (np.asarray(v) for v in (x, h, c, W, b))
    hidden = h.shape[-1]
    if c.shape != h.shape:
        raise InvalidArgumentError(f"h 与 c 形状不符: {h.shape} vs {c.shape}")
    if W.shape != (x.shape[-1] + hidden, 4 * hidden):
        raise InvalidArgumentError(f"权重形状 {W.shape} 应为 {(x.shape[-1] + hidden, 4 * hidden)}")
    if b.shape != (4 * hidden,):
        raise InvalidArgumentError(f"偏置形状 {b.shape} 应为 {(4 * hidden,)}")
    if x.shape[:-1] != h.shape[:-1]:
        raise InvalidArgumentError(f"输入批维 {x.shape[:-1]} 与状态批维 {h.shape[:-1]} 不符")
    h_next, c_next, _ = _lstm_forward(x, h, c, W, b)
    return h_next, c_next


# ---------------------------------------------------------------------------
# 层
# ---------------------------------------------------------------------------

class Layer(ABC):
    """层基类：build 确定形状与参数，forward/backward 处理带批维的数组"""

    kind = "layer"

    def __init__(self):
        self.input_shape: Optional[Tuple[int, ...]] = None
        self.output_shape: Optional[Tuple[int, ...]] = None

    def build(self, input_shape: Sequence[int], rng: np.random.Generator,
              dtype=DEFAULT_DTYPE) -> Tuple[int, ...]:
        """
        根据输入形状（不含批维）初始化参数

        Returns:
            输出形状（不含批维）
        """
        self.input_shape = tuple(int(s) for s in input_shape)
        self.output_shape = tuple(int(s) for s in self._build(self.input_shape, rng, dtype))
        return self.output_shape

    def _build(self, input_shape, rng, dtype):
        return input_shape

    def _check_input(self, x: np.ndarray):
        if self.input_shape is not None and tuple(x.shape[1:]) != self.input_shape:
            raise InvalidArgumentError(
                f"{self.kind} 层输入形状 {tuple(x.shape[1:])} 与构建形状 {self.input_shape} 不符"
            )

    @abstractmethod
    def forward(self, x: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def backward(self, dy: np.ndarray) -> np.ndarray:
        pass

    def parameters(self) -> List[Tensor]:
        return []

    def spec(self) -> Dict:
        return {"kind": self.kind}

    def kink_state(self) -> List[np.ndarray]:
        """不可导点的选择状态（ReLU 符号、池化 argmax），用于梯度检查"""
        return []


class ConvND(Layer):
    """N 维卷积层，'same' 填充时输出空间尺寸不变（步长 1）"""

    def __init__(self, channels: int, kernel: Sequence[int], stride=1, padding="same"):
        super().__init__()
        if channels < 1:
            raise InvalidArgumentError(f"通道数必须为正: {channels}")
        self.channels = int(channels)
        self.kernel = tuple(int(k) for k in kernel)
        self.nd = len(self.kernel)
        self.stride = _as_tuple(stride, self.nd, "stride")
        if padding == "same":
            self.padding = tuple(k // 2 for k in self.kernel)
        else:
            self.padding = _as_tuple(padding, self.nd, "padding")
        self.kind = f"conv{self.nd}d"
        self.weight: Optional[Tensor] = None
        self.bias: Optional[Tensor] = None
        self._cache = None

    def _build(self, input_shape, rng, dtype):
        if len(input_shape) != self.nd + 1:
            raise InvalidArgumentError(f"{self.kind} 需要 {self.nd + 1} 维输入（不含批维）: {input_shape}")
        cin = input_shape[-1]
        out = []
        for s, k, p, st in zip(input_shape[:-1], self.kernel, self.padding, self.stride):
            if s + 2 * p < k:
                raise InvalidArgumentError(f"{self.kind} 卷积核 {self.kernel} 大于填充后的输入 {input_shape[:-1]}")
            out.append((s + 2 * p - k) // st + 1)
        fan_in = int(np.prod(self.kernel)) * cin
        limit = np.sqrt(6.0 / fan_in)
        self.weight = Tensor(rng.uniform(-limit, limit, (self.channels,) + self.kernel + (cin,)).astype(dtype),
                             f"{self.kind}.weight")
        self.bias = Tensor(np.zeros(self.channels, dtype=dtype), f"{self.kind}.bias")
        return tuple(out) + (self.channels,)

    def forward(self, x):
        self._check_input(x)
        y, self._cache = conv_forward(x, self.weight.data, self.bias.data, self.stride, self.padding)
        return y

    def backward(self, dy):
        dx, dw, db = conv_backward(dy, self._cache)
        self.weight.grad += dw
        self.bias.grad += db
        return dx

    def parameters(self):
        return [self.weight, self.bias]

    def spec(self):
        return {"kind": self.kind, "channels": self.channels, "kernel": list(self.kernel),
                "stride": list(self.stride), "padding": list(self.padding)}


class Conv3D(ConvND):
    def __init__(self, channels: int, kernel=(3, 3, 3), stride=1, padding="same"):
        super().__init__(channels, _as_tuple(kernel, 3, "kernel"), stride, padding)


class Conv2D(ConvND):
    def __init__(self, channels: int, kernel=(3, 3), stride=1, padding="same"):
        super().__init__(channels, _as_tuple(kernel, 2, "kernel"), stride, padding)


class MaxPool(Layer):
    """最大池化层"""

    kind = "maxpool"

    def __init__(self, pool: Sequence[int]):
        super().__init__()
        self.pool = tuple(int(p) for p in pool)
        if any(p < 1 for p in self.pool):
            raise InvalidArgumentError(f"池化窗口必须为正: {self.pool}")
        self._cache = None

    @classmethod
    def adaptive(cls, spatial: Sequence[int], size: int = 2) -> 'MaxPool':
        """尺寸不足 size 的轴不做池化"""
        return cls(tuple(size if s >= size else 1 for s in spatial))

    def _build(self, input_shape, rng, dtype):
        spatial = input_shape[:-1]
        if len(spatial) != len(self.pool):
            raise InvalidArgumentError(f"池化窗口 {self.pool} 与输入 {input_shape} 维数不符")
        if any(s < p for s, p in zip(spatial, self.pool)):
            raise InvalidArgumentError(f"池化窗口 {self.pool} 大于输入 {spatial}")
        return tuple(s // p for s, p in zip(spatial, self.pool)) + (input_shape[-1],)

    def forward(self, x):
        self._check_input(x)
        y, self._cache = maxpool_forward(x, self.pool)
        return y

    def backward(self, dy):
        return maxpool_backward(dy, self._cache)

    def spec(self):
        return {"kind": self.kind, "pool": list(self.pool)}

    def kink_state(self):
        return [] if self._cache is None else [self._cache[2].copy()]


class Dense(Layer):
    """
    全连接层

    init='he' 用于后接 ReLU 的层，'lecun' 用于线性输出
    """

    kind = "dense"

    def __init__(self, units: int, init: str = "he"):
        super().__init__()
        if units < 1:
            raise InvalidArgumentError(f"单元数必须为正: {units}")
        if init not in ("he", "lecun"):
            raise InvalidArgumentError(f"未知初始化方式: {init}")
        self.units = int(units)
        self.init = init
        self.weight: Optional[Tensor] = None
        self.bias: Optional[Tensor] = None
        self._x = None

    def _build(self, input_shape, rng, dtype):
        if len(input_shape) != 1:
            raise InvalidArgumentError(f"dense 需要一维输入，请先 flatten: {input_shape}")
        fan_in = input_shape[0]
        limit = np.sqrt((6.0 if self.init == "he" else 3.0) / fan_in)
        self.weight = Tensor(rng.uniform(-limit, limit, (fan_in, self.units)).astype(dtype), "dense.weight")
        self.bias = Tensor(np.zeros(self.units, dtype=dtype), "dense.bias")
        return (self.units,)

    def forward(self, x):
        self._check_input(x)
        self._x = x
        return x @ self.weight.data + self.bias.data

    def backward(self, dy):
        self.weight.grad += self._x.T @ dy
        self.bias.grad += dy.sum(axis=0)
        return dy @ self.weight.data.T

    def parameters(self):
        return [self.weight, self.bias]

    def spec(self):
        return {"kind": self.kind, "units": self.units, "init": self.init}


class ReLU(Layer):
    kind = "relu"

    def __init__(self):
        super().__init__()
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, dy):
        return np.where(self._mask, dy, 0).astype(dy.dtype, copy=False)

    def kink_state(self):
        return [] if self._mask is None else [self._mask.copy()]


class Linear(Layer):
    """恒等激活"""

    kind = "linear"

    def forward(self, x):
        return x

    def backward(self, dy):
        return dy


class Softmax(Layer):
    """最后一维上的 softmax"""

    kind = "softmax"

    def __init__(self):
        super().__init__()
        self._y = None

    def forward(self, x):
        shifted = x - np.max(x, axis=-1, keepdims=True)
        e = np.exp(shifted)
        self._y = e / np.sum(e, axis=-1, keepdims=True)
        return self._y

    def backward(self, dy):
        y = self._y
        return y * (dy - np.sum(dy * y, axis=-1, keepdims=True))


class Flatten(Layer):
    kind = "flatten"

    def _build(self, input_shape, rng, dtype):
        return (int(np.prod(input_shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape((dy.shape[0],) + self.input_shape)


class LSTM(Layer):
    """
    单层 LSTM，输入 B x T x F，只输出最后时刻的隐状态 B x H

    参数 W 形状 (F + H, 4H)，门顺序 i, f, o, g；遗忘门偏置初始化为 1
    """

    kind = "lstm"

    def __init__(self, hidden: int = 64):
        super().__init__()
        if hidden < 1:
            raise InvalidArgumentError(f"隐藏单元数必须为正: {hidden}")
        self.hidden = int(hidden)
        self.weight: Optional[Tensor] = None
        self.bias: Optional[Tensor] = None
        self._caches = []

    def _build(self, input_shape, rng, dtype):
        if len(input_shape) != 2:
            raise InvalidArgumentError(f"lstm 需要 T x F 输入: {input_shape}")
        features = input_shape[1]
        h = self.hidden
        limit = np.sqrt(3.0 / (features + h))
        self.weight = Tensor(rng.uniform(-limit, limit, (features + h, 4 * h)).astype(dtype), "lstm.weight")
        bias = np.zeros(4 * h, dtype=dtype)
        bias[h:2 * h] = 1.0
        self.bias = Tensor(bias, "lstm.bias")
        return (h,)

    def forward(self, x):
        self._check_input(x)
        batch, steps, _ = x.shape
        h = np.zeros((batch, self.hidden), dtype=np.result_type(x, self.weight.data))
        c = np.zeros_like(h)
        self._caches = []
        for t in range(steps):
            h, c, cache = _lstm_forward(x[:, t], h, c, self.weight.data, self.bias.data)
            self._caches.append(cache)
        return h

    def backward(self, dy):
        W = self.weight.data
        features = W.shape[0] - self.hidden
        batch = dy.shape[0]
        dx = np.zeros((batch, len(self._caches), features), dtype=dy.dtype)
        dh = dy
        dc = np.zeros_like(dy)
        dW = np.zeros_like(W)
        db = np.zeros_like(self.bias.data)
        for t in reversed(range(len(self._caches))):
            xh, c_prev, i, f, o, g, tc = self._caches[t]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            dz = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                do * o * (1.0 - o),
                dc * i * (1.0 - g * g),
            ], axis=-1)
            dW += xh.T @ dz
            db += dz.sum(axis=0)
            dxh = dz @ W.T
            dx[:, t] = dxh[:, :features]
            dh = dxh[:, features:]
            dc = dc * f
        self.weight.grad += dW
        self.bias.grad += db
        return dx

    def parameters(self):
        return [self.weight, self.bias]

    def spec(self):
        return {"kind": self.kind, "hidden": self.hidden}


class TimeDistributed(Layer):
    """
    对序列的每一帧施加同一个编码器（权重共享）

    输入 B x T x frame_shape，输出 B x T x F
    """

    kind = "time_distributed"

    def __init__(self, layers: Sequence[Layer]):
        super().__init__()
        if not layers:
            raise InvalidArgumentError("编码器不能为空")
        self.layers = list(layers)

    def _build(self, input_shape, rng, dtype):
        if len(input_shape) < 2:
            raise InvalidArgumentError(f"time_distributed 需要 T x 帧形状 输入: {input_shape}")
        shape = input_shape[1:]
        for layer in self.layers:
            shape = layer.build(shape, rng, dtype)
        if len(shape) != 1:
            raise InvalidArgumentError(f"编码器输出必须是一维特征: {shape}")
        return (input_shape[0],) + tuple(shape)

    def forward(self, x):
        self._check_input(x)
        batch, steps = x.shape[:2]
        y = x.reshape((batch * steps,) + x.shape[2:])
        for layer in self.layers:
            y = layer.forward(y)
        return y.reshape(batch, steps, -1)

    def backward(self, dy):
        batch, steps = dy.shape[:2]
        g = dy.reshape(batch * steps, -1)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g.reshape((batch, steps) + g.shape[1:])

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def spec(self):
        return {"kind": self.kind, "layers": [layer.spec() for layer in self.layers]}

    def kink_state(self):
        return [s for layer in self.layers for s in layer.kink_state()]


class LayerFactory:
    """根据层描述创建层"""

    @staticmethod
    def create_layer(spec: Dict) -> Layer:
        kind = spec.get("kind")
        if kind == "conv3d":
            return Conv3D(spec["channels"], spec["kernel"], spec.get("stride", 1), spec.get("padding", "same"))
        elif kind == "conv2d":
            return Conv2D(spec["channels"], spec["kernel"], spec.get("stride", 1), spec.get("padding", "same"))
        elif kind == "maxpool":
            return MaxPool(spec["pool"])
        elif kind == "dense":
            return Dense(spec["units"], spec.get("init", "he"))
        elif kind == "relu":
            return ReLU()
        elif kind == "linear":
            return Linear()
        elif kind == "softmax":
            return Softmax()
        elif kind == "flatten":
            return Flatten()
        elif kind == "lstm":
            return LSTM(spec["hidden"])
        elif kind == "time_distributed":
            return TimeDistributed([LayerFactory.create_layer(s) for s in spec["layers"]])
        else:
            raise InvalidArgumentError(f"未知的层类型: {kind}")


class ModelGraph:
    """
    顺序网络

    Args:
        layers: 层列表
        input_shape: 输入形状（不含批维）
        seed: 参数初始化种子
        dtype: 参数精度（训练用 float32，梯度检查用 float64）
    """

    def __init__(self, layers: Sequence[Layer], input_shape: Sequence[int], seed: int = 0,
                 dtype=DEFAULT_DTYPE):
        if not layers:
            raise InvalidArgumentError("网络至少需要一层")
        self.layers = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.seed = seed
        rng = np.random.default_rng(seed)
        shape = self.input_shape
        for position, layer in enumerate(self.layers):
            try:
                shape = layer.build(shape, rng, dtype)
            except InvalidArgumentError as e:
                logger.error(f"第 {position} 层 ({layer.kind}) 构建失败: {e}")
                raise
        self.output_shape = shape

    @classmethod
    def from_specs(cls, specs: Sequence[Dict], input_shape: Sequence[int], seed: int = 0,
                   dtype=DEFAULT_DTYPE) -> 'ModelGraph':
        return cls([LayerFactory.create_layer(s) for s in specs], input_shape, seed, dtype)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if tuple(x.shape[1:]) != self.input_shape:
            raise InvalidArgumentError(f"输入形状 {tuple(x.shape[1:])} 与网络输入 {self.input_shape} 不符")
        for layer in self.layers:
            x = layer.forward(x)
        return x

    __call__ = forward

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def parameters(self) -> List[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def to_dtype(self, dtype) -> 'ModelGraph':
        for p in self.parameters():
            p.astype(dtype)
        return self

    def copy(self) -> 'ModelGraph':
        return copy.deepcopy(self)

    def specs(self) -> List[Dict]:
        return [layer.spec() for layer in self.layers]

    def kink_signature(self) -> List[np.ndarray]:
        return [s for layer in self.layers for s in layer.kink_state()]

    def summary(self) -> str:
        """逐层形状与参数量"""
        lines = [f"input {self.input_shape}"]
        for layer in self.layers:
            count = sum(p.size for p in layer.parameters())
            lines.append(f"{layer.kind:<18} {str(layer.output_shape):<24} {count}")
        lines.append(f"total params {self.param_count()}")
        return "\n".join(lines)
