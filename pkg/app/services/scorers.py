"""
可插拔质量评分器

所有评分器遵循同一接口 (Scorer):
    score(video, rng) -> float
    has_input_gradient: bool
    value_and_gradient(video, rng) -> (float, 梯度)   仅当 has_input_gradient
    input_gradient(video, rng) -> 梯度                 同上

随机性只来自 rng 参数; 对确定性评分器, rng 被忽略.
"""

from typing import List, Optional, Protocol, Tuple, runtime_checkable

import numpy as np
from numpy.typing import NDArray
from scipy.special import expit

from app.core.exceptions import CapabilityError
from app.models.video import FloatVideo, VideoLike, as_float
from app.schemas.defense import DefenseConfig
from app.schemas.train import AnalyticWeights
from app.services.defense import (
    BranchInput,
    draw_start_frames,
    guard_branch,
    inter_branch_input,
    intra_branch_input,
    source_branch_input,
)


@runtime_checkable
class Scorer(Protocol):
    """评分器接口"""

    name: str
    has_input_gradient: bool

    def score(self, video: VideoLike, rng: np.random.Generator) -> float: ...

    def value_and_gradient(
        self, video: VideoLike, rng: np.random.Generator
    ) -> Tuple[float, FloatVideo]: ...

    def input_gradient(self, video: VideoLike, rng: np.random.Generator) -> FloatVideo: ...


class BaseScorer:
    """评分器基类: 提供 input_gradient 与能力检查"""

    name: str = "base"
    has_input_gradient: bool = False

    def score(self, video: VideoLike, rng: np.random.Generator) -> float:
        raise NotImplementedError

    def value_and_gradient(
        self, video: VideoLike, rng: np.random.Generator
    ) -> Tuple[float, FloatVideo]:
        raise CapabilityError(f"评分器 {self.name} 不提供输入梯度")

    def input_gradient(self, video: VideoLike, rng: np.random.Generator) -> FloatVideo:
        return self.value_and_gradient(video, rng)[1]


class MeanPixelScorer(BaseScorer):
    """线性参考评分器: 像素均值 (0–255 尺度), 梯度处处为 1/N"""

    name = "mean_pixel"
    has_input_gradient = True

    def score(self, video: VideoLike, rng: np.random.Generator) -> float:
        return float(np.mean(as_float(video)))

    def value_and_gradient(
        self, video: VideoLike, rng: np.random.Generator
    ) -> Tuple[float, FloatVideo]:
        x = as_float(video)
        return float(np.mean(x)), np.full(x.shape, 1.0 / x.size)


def _mean_or_zero(values: NDArray) -> float:
    return float(np.mean(values)) if values.size else 0.0


class AnalyticScorer(BaseScorer):
    """
    闭式可微评分器

    score = 1 + 4·σ(w₁·sharpness − w₂·noise_proxy − w₃·temporal_roughness + b)
        sharpness          = mean|水平前向差分| + mean|竖直前向差分|
        noise_proxy        = mean(四邻域拉普拉斯响应²)
        temporal_roughness = mean|帧差|
    特征在 0–1 尺度 (像素 / 255) 上计算.
    """

    name = "analytic"
    has_input_gradient = True

    def __init__(self, weights: Optional[AnalyticWeights] = None):
        self.weights = weights or AnalyticWeights()

    @staticmethod
    def features(x: NDArray) -> dict:
        """计算三个特征及其中间量 (x 为 0–1 尺度)"""
        dx = x[:, :, 1:, :] - x[:, :, :-1, :]
        dy = x[:, 1:, :, :] - x[:, :-1, :, :]
        lap = (
            x[:, :-2, 1:-1] + x[:, 2:, 1:-1] + x[:, 1:-1, :-2] + x[:, 1:-1, 2:]
            - 4.0 * x[:, 1:-1, 1:-1]
        )
        dt = x[1:] - x[:-1]
        return {
            "dx": dx,
            "dy": dy,
            "lap": lap,
            "dt": dt,
            "sharpness": _mean_or_zero(np.abs(dx)) + _mean_or_zero(np.abs(dy)),
            "noise_proxy": _mean_or_zero(lap**2),
            "temporal_roughness": _mean_or_zero(np.abs(dt)),
        }

    def _logit(self, feats: dict) -> float:
        w = self.weights
        return (
            w.w_sharpness * feats["sharpness"]
            - w.w_noise * feats["noise_proxy"]
            - w.w_temporal * feats["temporal_roughness"]
            + w.bias
        )

    def score(self, video: VideoLike, rng: Optional[np.random.Generator] = None) -> float:
        feats = self.features(as_float(video) / 255.0)
        return float(1.0 + 4.0 * expit(self._logit(feats)))

    def value_and_gradient(
        self, video: VideoLike, rng: Optional[np.random.Generator] = None
    ) -> Tuple[float, FloatVideo]:
        x = as_float(video) / 255.0
        feats = self.features(x)
        sig = float(expit(self._logit(feats)))
        score = 1.0 + 4.0 * sig
        w = self.weights

        grad = np.zeros_like(x)
        dx, dy, lap, dt = feats["dx"], feats["dy"], feats["lap"], feats["dt"]
        if dx.size:
            g = w.w_sharpness * np.sign(dx) / dx.size
            grad[:, :, 1:] += g
            grad[:, :, :-1] -= g
        if dy.size:
            g = w.w_sharpness * np.sign(dy) / dy.size
            grad[:, 1:] += g
            grad[:, :-1] -= g
        if lap.size:
            g = -w.w_noise * 2.0 * lap / lap.size
            grad[:, :-2, 1:-1] += g
            grad[:, 2:, 1:-1] += g
            grad[:, 1:-1, :-2] += g
            grad[:, 1:-1, 2:] += g
            grad[:, 1:-1, 1:-1] -= 4.0 * g
        if dt.size:
            g = -w.w_temporal * np.sign(dt) / dt.size
            grad[1:] += g
            grad[:-1] -= g

        # 链式法则: d score / d logit = 4σ(1−σ), 再换回 0–255 尺度
        grad *= 4.0 * sig * (1.0 - sig) / 255.0
        return score, grad


class DefendedScorer(BaseScorer):
    """
    即插即用的防御包装

    把与小网络相同的防御流水线套在任意基础评分器外面, 基础评分器对每条分支输入分别打分:
        帧内路径: grid_sampling 开启时跳帧采样 + 网格碎片化, 否则为整段源视频;
                  intra_guardian 开启时再加守护图
        帧间路径: inter_branch 开启时连续采样 + 双线性缩放 (+ inter_guardian 守护图)
    分数为各路径的平均; 每次调用重新抽取起始帧、网格偏移和守护图,
    stochastic_passes > 1 时对多次抽取取平均 (分数和梯度一致).
    """

    has_input_gradient = False

    def __init__(
        self,
        base: Scorer,
        defense: DefenseConfig,
        region_mask: Optional[NDArray[np.bool_]] = None,
    ):
        self.base = base
        self.defense = defense
        self.region_mask = region_mask
        self.name = f"{base.name}+{defense.label}"
        self.has_input_gradient = base.has_input_gradient

    def with_region(self, region_mask: Optional[NDArray[np.bool_]]) -> "DefendedScorer":
        return DefendedScorer(self.base, self.defense, region_mask)

    def without_guardian(self) -> Scorer:
        defense = self.defense.without_guardian()
        if not defense.any_active:
            return self.base
        return DefendedScorer(self.base, defense)

    def _branches(self, x: FloatVideo, rng: np.random.Generator) -> List[BranchInput]:
        d = self.defense
        s_intra = s_inter = 0
        if d.grid_sampling or d.inter_branch:
            s_intra, s_inter = draw_start_frames(
                x.shape[0], d.skip_interval, d.frames, rng, d.random_start
            )

        if d.grid_sampling:
            branches = [intra_branch_input(x, d, s_intra, rng, self.region_mask)]
        else:
            source = source_branch_input(x, self.region_mask)
            if d.intra_guardian:
                guard_branch(source, d.per_frame_guardian, rng)
            branches = [source]

        if d.inter_branch:
            branches.append(inter_branch_input(x, d, s_inter, rng, self.region_mask))
        return branches

    def score(self, video: VideoLike, rng: np.random.Generator) -> float:
        x = as_float(video)
        total = 0.0
        for _ in range(self.defense.stochastic_passes):
            branches = self._branches(x, rng)
            total += sum(self.base.score(b.frames, rng) for b in branches) / len(branches)
        return total / self.defense.stochastic_passes

    def value_and_gradient(
        self, video: VideoLike, rng: np.random.Generator
    ) -> Tuple[float, FloatVideo]:
        if not self.has_input_gradient:
            raise CapabilityError(f"评分器 {self.name} 不提供输入梯度")
        x = as_float(video)
        total, grad = 0.0, np.zeros_like(x)
        for _ in range(self.defense.stochastic_passes):
            branches = self._branches(x, rng)
            for branch in branches:
                value, g = self.base.value_and_gradient(branch.frames, rng)
                total += value / len(branches)
                branch.backward(g / len(branches), grad)
        passes = self.defense.stochastic_passes
        return total / passes, grad / passes
