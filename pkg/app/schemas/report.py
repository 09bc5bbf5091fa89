"""
实验报告模型
"""

from typing import Any, Dict, List, Optional

from pydantic import Field

from app.schemas.base import BaseReportModel

SUMMARY_FIELDS = [
    "dataset",
    "scorer",
    "defense",
    "attack",
    "srcc_before",
    "plcc_before",
    "srcc_after",
    "plcc_after",
    "r_value",
    "queries_or_iters",
    "seed",
]

PER_VIDEO_FIELDS = ["video_id", "mos", "score_before", "score_after", "target", "accepted_queries"]


class VideoRecord(BaseReportModel):
    """单个被攻击视频的结果"""

    video_id: str
    mos: float
    score_before: float
    score_after: float
    target: float
    accepted_queries: int = Field(description="黑盒: 被保留的查询数; 白盒: 有效迭代数")
    queries_used: int = 0
    iterations_used: int = 0

    @property
    def shift_toward_target(self) -> float:
        """分数向目标移动的距离 (远离目标为负)"""
        return abs(self.score_before - self.target) - abs(self.score_after - self.target)


class ExperimentReport(BaseReportModel):
    """一次 (评分器, 防御配置, 攻击) 实验的结果"""

    dataset: str
    scorer: str
    defense: str
    attack: str
    srcc_before: float
    plcc_before: float
    srcc_after: float
    plcc_after: float
    r_value: float
    r_used: int
    r_excluded: int
    queries_or_iters: int = Field(description="黑盒为每视频查询预算, 白盒为迭代次数")
    budget_scope: str = Field(default="video", description="查询预算按视频或按帧计")
    metrics_scope: str = Field(default="attacked_subset", description="前后指标基于被攻击子集")
    region_mask_source: Optional[str] = Field(
        default=None, description="非 full 区域模式下补丁掩码的来源 (攻击者区域已知的假设)"
    )
    seed: int
    wall_time: float = Field(default=0.0, exclude=True, description="耗时 (秒), 只进日志, 不写入 report.json")
    records: List[VideoRecord] = Field(default_factory=list)
    training_plcc: Optional[float] = None
    config: Dict[str, Any] = Field(default_factory=dict)

    def summary_row(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in SUMMARY_FIELDS}
