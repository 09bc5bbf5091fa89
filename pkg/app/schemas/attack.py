"""
攻击配置的 Pydantic 模型 ([attack] 配置节)
"""

from typing import Literal, Optional

from pydantic import Field

from app.schemas.base import StrictModel

AttackMode = Literal["whitebox_linf", "whitebox_l2", "blackbox"]


class AttackConfig(StrictModel):
    """
    攻击配置

    像素单位均为 0–255 尺度: per_iter_bound=1.0 即 1/255, 3.0 即 3/255.
    """

    mode: AttackMode = Field(default="blackbox", description="攻击方式")
    per_iter_bound: float = Field(default=1.0, gt=0, description="白盒每步范数上限")
    iterations: int = Field(default=10, ge=0, description="白盒迭代次数")
    query_budget: int = Field(default=300, ge=0, description="黑盒查询预算")
    patch_side: int = Field(default=56, ge=1, description="黑盒每次扰动的方块边长")
    query_amplitude: float = Field(default=8.0, ge=0, description="黑盒每次扰动的幅度")
    global_budget: Optional[float] = Field(default=None, gt=0, description="整体 L∞ 上限")
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64, description="为空时由主种子派生")
    frame_selection: Literal["round_robin", "random"] = Field(
        default="round_robin", description="黑盒每次查询选帧方式"
    )
    budget_scope: Literal["video", "frame"] = Field(
        default="video", description="查询预算按整个视频计, 或按每帧计"
    )

    @property
    def is_whitebox(self) -> bool:
        return self.mode != "blackbox"
