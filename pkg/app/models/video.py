"""
视频数据模型

Video 是 T×H×W×3 的 8 位像素序列; FloatVideo 是防御/攻击流水线内部使用的
0–255 浮点表示, 最终通过 quantize (四舍五入远离零, 再截断) 回到 Video.
"""

from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.typing import NDArray

# 0–255 浮点视频, 形状 (T, H, W, 3)
FloatVideo = NDArray[np.float64]

CHANNELS = 3


@dataclass(frozen=True, eq=False)
class Video:
    """8 位 RGB 视频, pixels 形状为 (T, H, W, 3), dtype uint8"""

    pixels: NDArray[np.uint8]

    def __post_init__(self):
        pixels = self.pixels
        if not isinstance(pixels, np.ndarray) or pixels.dtype != np.uint8:
            raise TypeError("Video.pixels 必须是 uint8 的 numpy 数组")
        if pixels.ndim != 4 or pixels.shape[3] != CHANNELS:
            raise ValueError(f"Video.pixels 形状必须为 (T, H, W, 3), 实际为 {pixels.shape}")
        if min(pixels.shape[:3]) < 1:
            raise ValueError(f"T, H, W 都必须 ≥ 1, 实际为 {pixels.shape[:3]}")

    @property
    def frames(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[2])

    @property
    def shape(self) -> tuple:
        return tuple(self.pixels.shape)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Video):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    def __repr__(self):
        return f"<Video(T={self.frames}, H={self.height}, W={self.width})>"


@dataclass(frozen=True)
class LabeledVideo:
    """带 MOS 标签的视频"""

    video: Video
    mos: float
    video_id: str = ""

    def __post_init__(self):
        if not np.isfinite(self.mos) or not 1.0 <= self.mos <= 5.0:
            raise ValueError(f"MOS 必须是 [1, 5] 内的有限值, 实际为 {self.mos}")


VideoLike = Union[Video, FloatVideo]


def as_float(video: VideoLike) -> FloatVideo:
    """
    转换为 float64 副本 (0–255 尺度)

    Args:
        video: Video 或已是浮点的数组

    Returns:
        FloatVideo: 新分配的 float64 数组
    """
    if isinstance(video, Video):
        return video.pixels.astype(np.float64)
    return np.array(video, dtype=np.float64, copy=True)


def quantize(fv: FloatVideo) -> Video:
    """
    浮点视频量化为 8 位视频: 先四舍五入 (远离零), 再截断到 [0, 255]

    Args:
        fv: 形状 (T, H, W, 3) 的浮点数组

    Returns:
        Video: 量化后的视频
    """
    values = np.asarray(fv, dtype=np.float64)
    rounded = np.sign(values) * np.floor(np.abs(values) + 0.5)
    return Video(pixels=np.clip(rounded, 0, 255).astype(np.uint8))
