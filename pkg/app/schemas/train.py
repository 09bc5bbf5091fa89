"""
评分模型相关的 Pydantic 模型 ([train] 与 [analytic] 配置节)
"""

from typing import Literal, Optional

from pydantic import Field

from app.schemas.base import StrictModel


class TrainConfig(StrictModel):
    """小网络训练配置 (Adam, 学习率 0.001, 批大小 12)"""

    learning_rate: float = Field(default=0.001, gt=0, description="Adam 学习率")
    batch_size: int = Field(default=12, ge=1, description="批大小")
    epochs: int = Field(default=30, ge=0, description="训练轮数")
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64, description="为空时由主种子派生")
    freeze_inter_encoder: bool = Field(default=False, description="冻结帧间编码器参数")
    defense: Literal["eval", "off"] = Field(
        default="eval", description="eval: 训练时使用评估防御配置; off: 关闭所有随机变换"
    )


class AnalyticWeights(StrictModel):
    """
    解析评分器权重: score = 1 + 4·σ(w₁·sharpness − w₂·noise − w₃·temporal + b)

    三个特征在 0–1 尺度上分别不超过 2、16、1, 默认权重下 logit ∈ [−35, 2],
    任意合法视频的分数都严格落在 (1, 5) 内, 梯度不会因 σ 饱和而消失.
    """

    w_sharpness: float = Field(default=0.5, allow_inf_nan=False)
    w_noise: float = Field(default=2.0, allow_inf_nan=False)
    w_temporal: float = Field(default=4.0, allow_inf_nan=False)
    bias: float = Field(default=1.0, allow_inf_nan=False)
