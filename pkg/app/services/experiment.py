"""
实验运行器

流程: 生成/加载数据集 → 训练或加载评分器 → 选出被攻击子集 → 干净打分 →
逐视频攻击 → 对抗打分 → 前后指标与 R → 报告.

每个视频的打分与攻击使用由 (主种子, 组件标签, 视频序号) 派生的独立子流,
串行与并行执行结果一致.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from app.core.config import settings
from app.core.exceptions import DegenerateDatasetError
from app.core.logging import get_event_logger
from app.models.attack import AttackResult
from app.models.video import LabeledVideo
from app.schemas.attack import AttackConfig
from app.schemas.experiment import ExperimentConfig
from app.schemas.report import ExperimentReport, VideoRecord
from app.services.attack import run_attack, target_score
from app.services.metrics import RobustnessRecord, ScorePairs, plcc, r_metric, srcc
from app.services.scorers import AnalyticScorer, DefendedScorer, Scorer
from app.services.synth import generate_dataset
from app.services.tinynet import TinyNetScorer
from app.services.training import train_tinynet
from app.utils.params_io import load_params, save_params
from app.utils.report_writer import TRACE_DIR, write_failure_marker, write_per_video, write_trace_csv
from app.utils.rng import derive_seed, substream
from app.utils.rvid import read_manifest

REGION_MASK_SOURCE = "accepted patches of a preliminary attack on the guardian-free scorer (attacker region assumed known)"


@dataclass
class AttackOutcome:
    index: int
    item: LabeledVideo
    target: float
    score_before: float
    score_after: float
    result: AttackResult


def load_dataset(cfg: ExperimentConfig) -> List[LabeledVideo]:
    """按配置合成数据集或读取清单"""
    if cfg.experiment.manifest_path is not None:
        return read_manifest(cfg.experiment.manifest_path)
    return generate_dataset(cfg.dataset, cfg.experiment.master_seed)


def train_seed(cfg: ExperimentConfig) -> int:
    if cfg.train.seed is not None:
        return cfg.train.seed
    return derive_seed(cfg.experiment.master_seed, "train")


def build_scorer(
    cfg: ExperimentConfig,
    dataset: Sequence[LabeledVideo],
    params_out: Optional[Path] = None,
) -> Tuple[Scorer, Optional[float]]:
    """
    构造评分器

    Args:
        cfg: 实验配置
        dataset: 训练集 (只在需要训练小网络时使用)
        params_out: 训练得到的参数写出路径

    Returns:
        (评分器, 训练集 PLCC; 未训练时为 None)
    """
    defense = cfg.defense
    if cfg.experiment.scorer == "analytic":
        base = AnalyticScorer(cfg.analytic)
        scorer = DefendedScorer(base, defense) if defense.any_active else base
        return scorer, None

    if cfg.experiment.params_path is not None:
        return TinyNetScorer(load_params(cfg.experiment.params_path), defense), None

    train_cfg = cfg.train.model_copy(update={"seed": train_seed(cfg)})
    result = train_tinynet(dataset, train_cfg, defense=defense)
    if params_out is not None:
        save_params(result.params, params_out)
    return TinyNetScorer(result.params, defense), result.final_plcc


def select_attack_subset(count: int, limit: int, master_seed: int) -> np.ndarray:
    """从 count 个视频中选出 min(limit, count) 个, 按序号升序返回"""
    order = substream(master_seed, "attack_subset").permutation(count)
    return np.sort(order[: min(limit, count)])


def attack_config_for(cfg: ExperimentConfig, index: int) -> AttackConfig:
    """为第 index 个视频派生攻击种子"""
    if cfg.attack.seed is not None:
        seed = derive_seed(cfg.attack.seed, "attack", index)
    else:
        seed = derive_seed(cfg.experiment.master_seed, "attack", index)
    return cfg.attack.model_copy(update={"seed": seed})


def attack_video(
    scorer: Scorer,
    video,
    tar: float,
    attack_cfg: AttackConfig,
    guardian_region: str = "full",
) -> AttackResult:
    """
    攻击单个视频

    非 full 区域模式下先用去掉守护图的评分器做一次预攻击 (同一种子),
    以保留补丁的并集作为"被攻击区域", 再对限定区域的评分器发起正式攻击.
    """
    if guardian_region != "full":
        preliminary = run_attack(scorer.without_guardian(), video, tar, attack_cfg)
        attacked = preliminary.patch_mask
        region = attacked if guardian_region == "attacked_only" else ~attacked
        logger.debug(f"区域模式 {guardian_region}: 被攻击像素占比 {attacked.mean():.4f}")
        scorer = scorer.with_region(region)
    return run_attack(scorer, video, tar, attack_cfg)


def _attack_label(attack: AttackConfig) -> str:
    if attack.is_whitebox:
        return f"{attack.mode}(iters={attack.iterations},bound={attack.per_iter_bound})"
    return (
        f"blackbox(queries={attack.query_budget}/{attack.budget_scope},"
        f"patch={attack.patch_side},amp={attack.query_amplitude})"
    )


def _correlations(before: Sequence[float], after: Sequence[float], mos: Sequence[float]):
    before_pairs = ScorePairs.of(before, mos)
    after_pairs = ScorePairs.of(after, mos)
    return srcc(before_pairs), plcc(before_pairs), srcc(after_pairs), plcc(after_pairs)


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[Path] = None) -> ExperimentReport:
    """
    运行一次完整实验

    Args:
        cfg: 实验配置
        out_dir: 轨迹与失败标记的输出目录; 为空时不写任何文件

    Returns:
        ExperimentReport: 前后指标基于被攻击子集

    Raises:
        LabError: 各组件错误原样抛出; 有 out_dir 时先落盘已完成的逐视频行和 FAILED 标记
    """
    started = time.perf_counter()
    master = cfg.experiment.master_seed
    events = get_event_logger(experiment=cfg.experiment.name, seed=master)
    records: List[VideoRecord] = []
    try:
        dataset = load_dataset(cfg)
        subset = select_attack_subset(len(dataset), cfg.experiment.attack_subset, master)
        if len(subset) < 2:
            raise DegenerateDatasetError(
                f"被攻击子集只有 {len(subset)} 个视频, 前后相关系数至少需要 2 个"
            )
        scorer, training_plcc = build_scorer(cfg, dataset)
        logger.info(
            f"实验开始: scorer={cfg.experiment.scorer}, 防御={cfg.defense.label}, "
            f"攻击={cfg.attack.mode}, 被攻击视频 {len(subset)}/{len(dataset)}"
        )

        def work(index: int) -> AttackOutcome:
            item = dataset[index]
            tar = target_score(item.mos, cfg.experiment.score_min, cfg.experiment.score_max)
            before = scorer.score(item.video, substream(master, "eval", index))
            result = attack_video(
                scorer, item.video, tar, attack_config_for(cfg, index), cfg.defense.guardian_region
            )
            after = scorer.score(result.adversarial, substream(master, "eval", index))
            return AttackOutcome(index, item, tar, before, after, result)

        outcomes: List[AttackOutcome] = []
        with ThreadPoolExecutor(max_workers=settings.WORKERS) as executor:
            for outcome in executor.map(work, [int(i) for i in subset]):
                outcomes.append(outcome)
                record = VideoRecord(
                    video_id=outcome.item.video_id or f"v{outcome.index:04d}",
                    mos=outcome.item.mos,
                    score_before=outcome.score_before,
                    score_after=outcome.score_after,
                    target=outcome.target,
                    accepted_queries=outcome.result.accepted_steps,
                    queries_used=outcome.result.queries_used,
                    iterations_used=outcome.result.iterations_used,
                )
                records.append(record)
                events.info(
                    f"video={record.video_id} mos={record.mos:.4f} before={record.score_before:.4f} "
                    f"after={record.score_after:.4f} target={record.target}"
                )

        if out_dir is not None and cfg.output.write_traces:
            for outcome, record in zip(outcomes, records):
                write_trace_csv(outcome.result, Path(out_dir) / TRACE_DIR / f"{record.video_id}.csv")

        mos = [r.mos for r in records]
        srcc_before, plcc_before, srcc_after, plcc_after = _correlations(
            [r.score_before for r in records], [r.score_after for r in records], mos
        )
        robustness = r_metric(
            [RobustnessRecord(f_orig=r.score_before, f_adv=r.score_after, tar=r.target) for r in records]
        )
    except Exception as e:
        if out_dir is not None:
            write_per_video(records, out_dir)
            write_failure_marker(out_dir, e)
        logger.error(f"实验失败 (已完成 {len(records)} 个视频): {e}")
        raise

    attack = cfg.attack
    report = ExperimentReport(
        dataset=cfg.experiment.name,
        scorer=cfg.experiment.scorer,
        defense=cfg.defense.label,
        attack=_attack_label(attack),
        srcc_before=srcc_before,
        plcc_before=plcc_before,
        srcc_after=srcc_after,
        plcc_after=plcc_after,
        r_value=robustness.value,
        r_used=robustness.used,
        r_excluded=robustness.excluded,
        queries_or_iters=attack.iterations if attack.is_whitebox else attack.query_budget,
        budget_scope=attack.budget_scope,
        region_mask_source=REGION_MASK_SOURCE if cfg.defense.guardian_region != "full" else None,
        seed=master,
        wall_time=time.perf_counter() - started,
        records=records,
        training_plcc=training_plcc,
        config=cfg.model_dump(mode="json"),
    )
    events.info(
        f"experiment={report.dataset} defense={report.defense} attack={report.attack} "
        f"srcc {srcc_before:.4f}->{srcc_after:.4f} R={robustness.value:.4f}"
    )
    logger.info(f"实验完成, 用时 {report.wall_time:.1f} 秒")
    return report
