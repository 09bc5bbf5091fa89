"""
实验室统一异常定义

所有业务异常继承 LabError, CLI 入口据此区分业务错误 (退出码 2) 与程序缺陷 (退出码 1).
"""

from typing import Optional


class LabError(Exception):
    """实验室异常基类"""


# ---- 视频容器 / 参数文件 ----


class VideoIOError(LabError):
    """写入目标失败, 记录已写出的字节数"""

    def __init__(self, message: str, bytes_written: int):
        super().__init__(message)
        self.bytes_written = bytes_written


class FormatError(LabError):
    """魔数或头部字段非法"""


class TruncatedError(LabError):
    """声明的数据量超过实际流长度"""


class UnsupportedError(LabError):
    """格式合法但本实现不支持 (通道数, 版本号)"""


# ---- 防御变换 ----


class RangeError(LabError):
    """时间采样所需帧数超过视频帧数"""

    def __init__(self, required: int, available: int):
        super().__init__(f"采样需要 {required} 帧, 视频只有 {available} 帧")
        self.required = required
        self.available = available


class GridError(LabError):
    """网格/守护图与帧尺寸不匹配"""


# ---- 评分模型 ----


class ModelError(LabError):
    """网络参数维度或结构错误"""


class DegenerateDatasetError(LabError):
    """训练集不满足前提 (MOS 全相同, 样本不足)"""


class CapabilityError(LabError):
    """评分器不具备所需能力 (例如没有输入梯度)"""


# ---- 指标 ----


class DegenerateError(LabError):
    """相关系数或 R 指标在退化输入上无定义"""


class MetricError(LabError):
    """指标输入不合法 (长度不一致, 非有限值)"""


# ---- 报告 ----


class ReportIOError(LabError):
    """报告或轨迹文件写出失败, 携带路径"""

    def __init__(self, message: str, path: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# ---- 配置 ----


class ConfigError(LabError):
    """实验配置错误"""


class ConfigSyntaxError(ConfigError):
    """配置文件语法错误, 携带行号"""

    def __init__(self, message: str, line: int):
        super().__init__(f"第 {line} 行: {message}")
        self.line = line


class UnknownKeyError(ConfigError):
    """配置中出现未定义的键"""

    def __init__(self, key: str, section: str, line: Optional[int] = None):
        where = f"第 {line} 行, " if line is not None else ""
        super().__init__(f"{where}[{section}] 未知配置项: {key}")
        self.key = key
        self.section = section
        self.line = line


class ConstraintError(ConfigError):
    """配置值违反约束, 携带字段名"""

    def __init__(self, field: str, message: str):
        super().__init__(f"配置项 {field} 不合法: {message}")
        self.field = field
