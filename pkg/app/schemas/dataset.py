"""
数据集相关的 Pydantic 模型
"""

from typing import List, Literal

from pydantic import Field, field_validator

from app.schemas.base import StrictModel

BasePattern = Literal["gradient", "checker", "bands"]


class DegradationSpec(StrictModel):
    """合成视频的退化描述, MOS 由其解析得到"""

    base_pattern: BasePattern = Field(default="gradient", description="底图样式")
    noise_sigma: float = Field(default=0.0, ge=0, description="高斯噪声标准差 (像素)")
    blur_radius: int = Field(default=0, ge=0, description="方框模糊半径 (像素)")
    block_size: int = Field(default=0, ge=0, description="块效应量化尺寸 (像素)")
    temporal_jitter: float = Field(default=0.0, ge=0, description="逐帧亮度抖动幅度")
    seed: int = Field(default=0, ge=0, lt=2**64, description="64 位随机种子")


class DatasetConfig(StrictModel):
    """合成数据集配置 ([dataset] 配置节)"""

    count: int = Field(default=60, ge=2, description="视频数量 (至少 2 个)")
    frames: int = Field(default=64, ge=1, description="每个视频的帧数 T")
    height: int = Field(default=224, ge=1, description="帧高 H")
    width: int = Field(default=224, ge=1, description="帧宽 W")
    noise_sigma_max: float = Field(default=20.0, ge=0)
    blur_radius_max: int = Field(default=4, ge=0)
    block_size_max: int = Field(default=16, ge=0)
    temporal_jitter_max: float = Field(default=4.0, ge=0)
    patterns: List[BasePattern] = Field(
        default_factory=lambda: ["gradient", "checker", "bands"], min_length=1
    )

    @field_validator("patterns")
    @classmethod
    def unique_patterns(cls, value: List[str]) -> List[str]:
        if len(set(value)) != len(value):
            raise ValueError("patterns 不能重复")
        return value
