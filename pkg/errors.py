"""
异常定义模块
各子模块统一抛出的错误类型
"""


class LinkBenchError(Exception):
    """基准系统错误基类"""


class InvalidArgumentError(LinkBenchError, ValueError):
    """参数不合法（越界的连杆数、形状不匹配等）"""


class InvalidStateError(LinkBenchError, RuntimeError):
    """状态不满足操作前提（缺少回归器、缺少数据划分等）"""


class NonFiniteValueError(LinkBenchError, FloatingPointError):
    """训练中出现 NaN/Inf"""


class FormatError(LinkBenchError, ValueError):
    """文件格式错误"""


class FormatVersionError(FormatError):
    """文件格式版本不匹配"""


class ChecksumMismatchError(FormatError):
    """校验和不匹配或文件被截断"""
