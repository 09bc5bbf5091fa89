"""
防御配置的 Pydantic 模型 ([defense] 配置节)
"""

from typing import Literal

from pydantic import Field

from app.schemas.base import StrictModel

GuardianRegion = Literal["full", "attacked_only", "untouched_only"]


class DefenseConfig(StrictModel):
    """
    防御开关与几何参数

    默认值为全尺寸常量 (n=2, d=32, G=7, S=32, 224×224, 16 段),
    关闭全部开关且 stochastic_passes=1 时评分器是视频的确定性函数.
    """

    # 几何参数
    skip_interval: int = Field(default=2, ge=1, description="跳帧间隔 n")
    frames: int = Field(default=32, ge=1, description="每个分支采样的帧数 d")
    grid_count: int = Field(default=7, ge=1, description="每边网格数 G")
    patch_size: int = Field(default=32, ge=1, description="补丁边长 S")
    resize_height: int = Field(default=224, ge=1, description="帧间分支缩放高度")
    resize_width: int = Field(default=224, ge=1, description="帧间分支缩放宽度")
    segments: int = Field(default=16, ge=1, description="帧间分支的时间段数上限")

    # 防御开关 (消融矩阵)
    intra_guardian: bool = Field(default=True, description="帧内分支加守护图")
    inter_guardian: bool = Field(default=True, description="帧间分支加守护图")
    grid_sampling: bool = Field(default=True, description="关闭时帧内分支改为直接缩放")
    inter_branch: bool = Field(default=True, description="是否使用帧间 (时间) 分支")
    random_start: bool = Field(default=True, description="每次打分重新抽取起始帧")
    guardian_region: GuardianRegion = Field(default="full", description="守护图作用区域")
    per_frame_guardian: bool = Field(default=False, description="逐帧独立守护图")
    stochastic_passes: int = Field(default=1, ge=1, description="打分时平均的随机抽取次数")

    @property
    def any_guardian(self) -> bool:
        """是否有守护图实际生效 (帧间守护图只在帧间分支开启时生效)"""
        return self.intra_guardian or (self.inter_guardian and self.inter_branch)

    @property
    def any_active(self) -> bool:
        """是否有任一防御变换生效; 全部关闭时即插即用包装退化为基础评分器"""
        return self.any_guardian or self.grid_sampling or self.inter_branch

    @property
    def label(self) -> str:
        """报告中使用的防御标签, 如 gm_intra+gm_inter+grid+inter; 只列出实际生效的开关"""
        parts = []
        if self.intra_guardian:
            parts.append("gm_intra")
        if self.inter_guardian and self.inter_branch:
            parts.append("gm_inter")
        if self.grid_sampling:
            parts.append("grid")
        if self.inter_branch:
            parts.append("inter")
        if self.any_guardian and self.guardian_region != "full":
            parts.append(f"region={self.guardian_region}")
        return "+".join(parts) if parts else "none"

    def without_randomness(self) -> "DefenseConfig":
        """关闭所有随机变换, 几何参数与分支结构保持不变"""
        return self.model_copy(
            update={
                "intra_guardian": False,
                "inter_guardian": False,
                "grid_sampling": False,
                "random_start": False,
                "stochastic_passes": 1,
            }
        )

    def without_guardian(self) -> "DefenseConfig":
        return self.model_copy(update={"intra_guardian": False, "inter_guardian": False})
