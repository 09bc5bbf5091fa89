"""
实验配置的 Pydantic 模型

配置文件的每个节对应一个子模型; 未声明的键由 extra="forbid" 拒绝.
"""

from pathlib import Path
from typing import Literal, Optional

from pydantic import Field, model_validator

from app.core.config import settings
from app.core.exceptions import ConstraintError
from app.schemas.attack import AttackConfig
from app.schemas.base import StrictModel
from app.schemas.dataset import DatasetConfig
from app.schemas.defense import DefenseConfig
from app.schemas.train import AnalyticWeights, TrainConfig

ScorerKind = Literal["analytic", "tinynet"]


class ExperimentSection(StrictModel):
    """[experiment] 节 (也接收文件开头、第一个节之前的键)"""

    master_seed: int = Field(..., ge=0, lt=2**64, description="主种子, 所有子种子由此派生")
    preset: Optional[Literal["paper", "desk"]] = Field(default=None, description="常量预设")
    name: str = Field(default="synthetic", min_length=1, description="数据集名称 (写入报告)")
    scorer: ScorerKind = Field(default="tinynet", description="评分器")
    params_path: Optional[Path] = Field(default=None, description="为空时训练小网络")
    manifest_path: Optional[Path] = Field(default=None, description="为空时合成数据集")
    attack_subset: int = Field(default=50, ge=2, description="被攻击视频数上限; 前后相关系数至少需要 2 个视频")
    score_min: float = Field(default=settings.SCORE_MIN, allow_inf_nan=False)
    score_max: float = Field(default=settings.SCORE_MAX, allow_inf_nan=False)


class OutputConfig(StrictModel):
    """[output] 节"""

    out_dir: Optional[Path] = Field(default=None, description="为空时使用 Settings.OUTPUT_DIR")
    write_traces: bool = Field(default=True, description="是否写出逐视频攻击轨迹")

    @property
    def resolved_dir(self) -> Path:
        return self.out_dir if self.out_dir is not None else settings.OUTPUT_DIR


class ExperimentConfig(StrictModel):
    """完整实验配置"""

    experiment: ExperimentSection
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    defense: DefenseConfig = Field(default_factory=DefenseConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    attack: AttackConfig = Field(default_factory=AttackConfig)
    analytic: AnalyticWeights = Field(default_factory=AnalyticWeights)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def check_cross_fields(self) -> "ExperimentConfig":
        exp = self.experiment
        if not exp.score_min < exp.score_max:
            raise ConstraintError(
                "experiment.score_min", f"必须小于 score_max ({exp.score_min} ≥ {exp.score_max})"
            )
        if self.defense.guardian_region != "full":
            if self.attack.is_whitebox:
                raise ConstraintError(
                    "defense.guardian_region", "非 full 区域模式只用于黑盒攻击 (需要补丁掩码)"
                )
            if not self.defense.any_guardian:
                raise ConstraintError("defense.guardian_region", "区域模式要求至少启用一个守护图")
        if exp.manifest_path is None:
            side = min(self.dataset.height, self.dataset.width)
            if not self.attack.is_whitebox and self.attack.patch_side > side:
                raise ConstraintError(
                    "attack.patch_side", f"{self.attack.patch_side} 超过帧尺寸 {side}"
                )
        return self
