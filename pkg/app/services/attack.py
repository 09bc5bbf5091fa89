"""
攻击实现

白盒: 逐步有界的 PGD (L∞ / 逐帧 L2), 目标为最小化 (score − tar)²
黑盒: 方块扰动 + 保留/回退的查询搜索, 距目标更近才保留

攻击在浮点副本上进行, 结束时量化一次. 种子派生出三个独立子流:
    attack_plan   黑盒查询计划 (帧, 方块位置, 噪声), 只依赖种子与视频形状
    attack_scorer 攻击过程中评分器的随机性
    eval          攻击前后分数 (两次使用同一初始状态)
"""

from typing import Optional

import numpy as np
from loguru import logger

from app.core.exceptions import CapabilityError, ConstraintError
from app.models.attack import AttackResult, TraceRecord
from app.models.video import VideoLike, as_float, quantize
from app.schemas.attack import AttackConfig
from app.services.scorers import Scorer
from app.utils.rng import substream


def target_score(mos: float, score_min: float = 1.0, score_max: float = 5.0) -> float:
    """
    攻击目标分数: 取与 MOS 相反一侧的评分边界

    MOS 低于中点 → score_max, 否则 → score_min; 恰在中点时取 score_max.
    MOS 超出区间时同样按中点判断.
    """
    if not score_min < score_max:
        raise ConstraintError("score_min", f"必须小于 score_max ({score_min} ≥ {score_max})")
    midpoint = (score_min + score_max) / 2.0
    return score_max if mos <= midpoint else score_min


def _seed(cfg: AttackConfig) -> int:
    return cfg.seed if cfg.seed is not None else 0


def _project(x: np.ndarray, original: np.ndarray, global_budget: Optional[float]) -> np.ndarray:
    x = np.clip(x, 0.0, 255.0)
    if global_budget is not None:
        x = np.clip(x, original - global_budget, original + global_budget)
    return x


def _evaluate(scorer: Scorer, video: VideoLike, seed: int) -> float:
    return float(scorer.score(video, substream(seed, "eval")))


def pgd_attack(scorer: Scorer, video: VideoLike, tar: float, cfg: AttackConfig) -> AttackResult:
    """
    PGD 白盒攻击

    每步 g = ∇ₓ(score − tar)², L∞: x ← x − bound·sign(g); L2: 每帧 x_t ← x_t − bound·g_t/‖g_t‖₂.
    每步后截断到 [0, 255] 及原视频的 global_budget 邻域.

    Raises:
        CapabilityError: 评分器不提供输入梯度
        ConstraintError: cfg.mode 不是白盒模式
    """
    if not cfg.is_whitebox:
        raise ConstraintError("attack.mode", f"PGD 需要白盒模式, 实际为 {cfg.mode}")
    if not scorer.has_input_gradient:
        raise CapabilityError(f"评分器 {scorer.name} 不提供输入梯度, 无法进行白盒攻击")

    seed = _seed(cfg)
    scorer_rng = substream(seed, "attack_scorer")
    original = as_float(video)
    x = original.copy()
    bound = cfg.per_iter_bound
    trace = []

    for step in range(cfg.iterations):
        value, grad_score = scorer.value_and_gradient(x, scorer_rng)
        grad = 2.0 * (value - tar) * grad_score
        skipped = False
        if cfg.mode == "whitebox_linf":
            delta = -bound * np.sign(grad)
            skipped = not np.any(delta)
        else:
            norms = np.sqrt(np.sum(grad**2, axis=(1, 2, 3)))
            active = norms > 0
            delta = np.zeros_like(grad)
            delta[active] = -bound * grad[active] / norms[active, None, None, None]
            if not np.all(active):
                logger.warning(
                    f"PGD 第 {step} 步: {int(np.sum(~active))} 帧梯度范数为 0, 这些帧不更新"
                )
            skipped = not np.any(active)

        previous = x
        x = _project(x + delta, original, cfg.global_budget)
        change = x - previous
        if cfg.mode == "whitebox_linf":
            step_norm = float(np.abs(change).max())
        else:
            step_norm = float(np.sqrt(np.sum(change**2, axis=(1, 2, 3))).max())

        score = float(scorer.score(x, scorer_rng))
        trace.append(
            TraceRecord(
                step=step,
                score=score,
                accepted=not skipped,
                linf_so_far=float(np.abs(x - original).max()),
                step_norm=step_norm,
                skipped=skipped,
            )
        )
        logger.debug(f"PGD 第 {step} 步: score={score:.5f}, tar={tar}, |Δ|={step_norm:.4f}")

    adversarial = quantize(x)
    return AttackResult(
        adversarial=adversarial,
        score_before=_evaluate(scorer, video, seed),
        score_after=_evaluate(scorer, adversarial, seed),
        mode=cfg.mode,
        trace=trace,
        queries_used=0,
        iterations_used=cfg.iterations,
        patch_mask=np.zeros(original.shape[:3], dtype=bool),
    )


def blackbox_attack(
    scorer: Scorer, video: VideoLike, tar: float, cfg: AttackConfig
) -> AttackResult:
    """
    黑盒查询攻击

    每次查询选一帧 (轮询或随机), 在随机位置的 patch_side² 方块上加 [−A, A] 均匀噪声,
    查询一次评分器; 距目标更近则保留, 否则逐位恢复. 初始状态的评分不计入查询数.

    Raises:
        ConstraintError: patch_side 超过帧尺寸
    """
    original = as_float(video)
    T, H, W = original.shape[:3]
    side = cfg.patch_side
    if side > min(H, W):
        raise ConstraintError("attack.patch_side", f"{side} 超过帧尺寸 {H}×{W}")

    seed = _seed(cfg)
    plan_rng = substream(seed, "attack_plan")
    scorer_rng = substream(seed, "attack_scorer")
    budget = cfg.query_budget * (T if cfg.budget_scope == "frame" else 1)
    amplitude = cfg.query_amplitude

    x = original.copy()
    patch_mask = np.zeros((T, H, W), dtype=bool)
    current = float(scorer.score(x, scorer_rng)) if budget else 0.0
    linf = 0.0
    trace = []

    for query in range(budget):
        t = query % T if cfg.frame_selection == "round_robin" else int(plan_rng.integers(T))
        top = int(plan_rng.integers(H - side + 1))
        left = int(plan_rng.integers(W - side + 1))
        noise = plan_rng.uniform(-amplitude, amplitude, size=(side, side, 3))

        region = (t, slice(top, top + side), slice(left, left + side))
        saved = x[region].copy()
        candidate = saved + noise
        candidate = np.clip(candidate, 0.0, 255.0)
        if cfg.global_budget is not None:
            reference = original[region]
            candidate = np.clip(candidate, reference - cfg.global_budget, reference + cfg.global_budget)
        x[region] = candidate

        score = float(scorer.score(x, scorer_rng))
        accepted = abs(score - tar) < abs(current - tar)
        if accepted:
            current = score
            patch_mask[region] = True
            linf = float(np.abs(x - original).max())
        else:
            x[region] = saved
        trace.append(TraceRecord(step=query, score=score, accepted=accepted, linf_so_far=linf))

    adversarial = quantize(x)
    result = AttackResult(
        adversarial=adversarial,
        score_before=_evaluate(scorer, video, seed),
        score_after=_evaluate(scorer, adversarial, seed),
        mode=cfg.mode,
        trace=trace,
        queries_used=budget,
        iterations_used=0,
        patch_mask=patch_mask,
    )
    logger.debug(f"黑盒攻击完成: {result!r}, 保留 {result.accepted_steps} 次")
    return result


def run_attack(scorer: Scorer, video: VideoLike, tar: float, cfg: AttackConfig) -> AttackResult:
    """按 cfg.mode 分派到白盒或黑盒攻击"""
    if cfg.is_whitebox:
        return pgd_attack(scorer, video, tar, cfg)
    return blackbox_attack(scorer, video, tar, cfg)
