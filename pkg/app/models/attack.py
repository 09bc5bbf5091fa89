"""
攻击结果模型
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from numpy.typing import NDArray

from app.models.video import Video

TRACE_FIELDS = ["step", "score", "accepted", "linf_so_far"]


@dataclass(frozen=True)
class TraceRecord:
    """
    单步记录

    白盒: 每次迭代一条, score 为该步之后的分数
    黑盒: 每次查询一条, score 为被查询状态的分数 (无论是否保留)
    """

    step: int
    score: float
    accepted: bool
    linf_so_far: float
    step_norm: Optional[float] = None
    skipped: bool = False


@dataclass
class AttackResult:
    adversarial: Video
    score_before: float
    score_after: float
    mode: str
    trace: List[TraceRecord] = field(default_factory=list)
    queries_used: int = 0
    iterations_used: int = 0
    patch_mask: Optional[NDArray[np.bool_]] = None  # (T, H, W) 已保留补丁的并集

    @property
    def accepted_steps(self) -> int:
        return sum(1 for r in self.trace if r.accepted and not r.skipped)

    @property
    def score_shift(self) -> float:
        return self.score_after - self.score_before

    def __repr__(self):
        return (
            f"<AttackResult(mode={self.mode}, before={self.score_before:.4f}, "
            f"after={self.score_after:.4f}, queries={self.queries_used}, "
            f"iterations={self.iterations_used})>"
        )
