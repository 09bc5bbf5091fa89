"""
相关系数与鲁棒性指标 R

R = (1/K)·Σ ln(|f_orig − tar| / max(|f_orig − f_adv|, ε)), ε = 1e-8, 自然对数.
tar == f_orig 的记录无定义, 排除并计数. 攻击越过目标时得到负项, 不做截断.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from loguru import logger
from numpy.typing import ArrayLike, NDArray
from scipy.stats import rankdata

from app.core.exceptions import DegenerateError, MetricError

R_EPS = 1e-8


@dataclass(frozen=True)
class ScorePairs:
    predictions: NDArray[np.float64]
    references: NDArray[np.float64]

    def __post_init__(self):
        predictions = np.asarray(self.predictions, dtype=np.float64)
        references = np.asarray(self.references, dtype=np.float64)
        if predictions.ndim != 1 or references.ndim != 1:
            raise MetricError("预测值与参考值必须是一维向量")
        if len(predictions) != len(references):
            raise MetricError(f"长度不一致: {len(predictions)} vs {len(references)}")
        if len(predictions) < 2:
            raise MetricError(f"至少需要 2 对数据, 实际 {len(predictions)}")
        if not (np.all(np.isfinite(predictions)) and np.all(np.isfinite(references))):
            raise MetricError("存在非有限值")
        object.__setattr__(self, "predictions", predictions)
        object.__setattr__(self, "references", references)

    @classmethod
    def of(cls, predictions: ArrayLike, references: ArrayLike) -> "ScorePairs":
        return cls(np.asarray(predictions, dtype=np.float64), np.asarray(references, dtype=np.float64))


@dataclass(frozen=True)
class RobustnessRecord:
    f_orig: float
    f_adv: float
    tar: float


@dataclass(frozen=True)
class RMetricResult:
    value: float
    used: int
    excluded: int


def _pearson(x: NDArray, y: NDArray) -> float:
    a = x - x.mean()
    b = y - y.mean()
    norm_a, norm_b = np.sqrt(a @ a), np.sqrt(b @ b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise DegenerateError("方差为 0, 相关系数无定义")
    return float(np.clip(a @ b / (norm_a * norm_b), -1.0, 1.0))


def plcc(pairs: ScorePairs) -> float:
    """皮尔逊线性相关系数 (不做非线性映射)"""
    return _pearson(pairs.predictions, pairs.references)


def srcc(pairs: ScorePairs) -> float:
    """斯皮尔曼秩相关: 平均秩 (并列取所占秩位的均值) 上的皮尔逊相关"""
    return _pearson(
        rankdata(pairs.predictions, method="average"),
        rankdata(pairs.references, method="average"),
    )


def r_metric(records: Sequence[RobustnessRecord]) -> RMetricResult:
    """
    鲁棒性指标 R, 越大越鲁棒

    Raises:
        MetricError: 没有记录或存在非有限值
        DegenerateError: 所有记录都被排除
    """
    if not records:
        raise MetricError("R 指标至少需要 1 条记录")
    terms, excluded = [], 0
    for i, record in enumerate(records):
        values = (record.f_orig, record.f_adv, record.tar)
        if not all(np.isfinite(v) for v in values):
            raise MetricError(f"第 {i} 条记录含非有限值: {record}")
        if record.tar == record.f_orig:
            excluded += 1
            logger.warning(f"R 指标排除第 {i} 条记录: tar == f_orig == {record.tar}")
            continue
        gap = abs(record.f_orig - record.tar)
        shift = max(abs(record.f_orig - record.f_adv), R_EPS)
        terms.append(np.log(gap / shift))
    if not terms:
        raise DegenerateError(f"全部 {excluded} 条记录被排除, R 指标无定义")
    return RMetricResult(value=float(np.mean(terms)), used=len(terms), excluded=excluded)
