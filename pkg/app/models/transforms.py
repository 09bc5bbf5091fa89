"""
防御变换的参数实体
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray


@dataclass(frozen=True)
class SamplingParams:
    """时间采样参数: 起始帧 s, 间隔 n, 采样帧数 d"""

    s: int
    n: int
    d: int

    def __post_init__(self):
        if self.s < 0 or self.n < 1 or self.d < 1:
            raise ValueError(f"采样参数非法: s={self.s}, n={self.n}, d={self.d}")


@dataclass(frozen=True, eq=False)
class GridParams:
    """
    空间网格采样参数

    offsets 形状为 (G, G, 2), offsets[i, j] = (h, w) 是第 (i, j) 个网格内补丁的起点,
    同一序列的所有帧共享这组偏移.
    """

    G: int
    S: int
    offsets: NDArray[np.int64]

    def __post_init__(self):
        if self.G < 1 or self.S < 1:
            raise ValueError(f"网格参数非法: G={self.G}, S={self.S}")
        if self.offsets.shape != (self.G, self.G, 2):
            raise ValueError(
                f"offsets 形状必须为 ({self.G}, {self.G}, 2), 实际为 {self.offsets.shape}"
            )

    @property
    def out_size(self) -> int:
        return self.G * self.S


@dataclass(frozen=True, eq=False)
class GuardianMap:
    """
    守护图: 元素取值 ±1

    values 形状为 (H, W, 3) (所有帧共享) 或 (T, H, W, 3) (逐帧独立);
    region_mask 为 None 时作用于全部像素, 否则形状为 (H, W) 或 (T, H, W) 的布尔掩码.
    """

    values: NDArray[np.int8]
    region_mask: Optional[NDArray[np.bool_]] = None

    @property
    def per_frame(self) -> bool:
        return self.values.ndim == 4

    @property
    def frame_shape(self) -> tuple:
        return tuple(self.values.shape[-3:])
