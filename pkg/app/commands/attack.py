"""
attack: 攻击单个视频, 写出对抗视频与轨迹 CSV
"""

from pathlib import Path

import click
from loguru import logger

from app.commands import LabContext, pass_lab
from app.core.exceptions import ConstraintError
from app.services.attack import target_score
from app.services.experiment import attack_config_for, attack_video, build_scorer
from app.utils.report_writer import write_trace_csv
from app.utils.rvid import load_video, save_video

ATTACK_DIR = "attack"


@click.command("attack")
@click.argument("video_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--mos", type=float, required=True, help="该视频的 MOS, 决定攻击目标")
@click.option("--index", type=int, default=0, show_default=True, help="视频序号, 用于派生攻击种子")
@pass_lab
def command(lab: LabContext, video_path: Path, mos: float, index: int):
    """对 VIDEO_PATH 发起配置中的攻击"""
    cfg = lab.load()
    if cfg.experiment.scorer == "tinynet" and cfg.experiment.params_path is None:
        raise ConstraintError("experiment.params_path", "attack 子命令需要已训练的小网络参数")

    video = load_video(video_path)
    scorer, _ = build_scorer(cfg, [])
    tar = target_score(mos, cfg.experiment.score_min, cfg.experiment.score_max)
    result = attack_video(
        scorer, video, tar, attack_config_for(cfg, index), cfg.defense.guardian_region
    )

    target_dir = lab.out_dir(cfg) / ATTACK_DIR
    stem = video_path.stem
    save_video(result.adversarial, target_dir / f"{stem}.adv.rvid")
    trace_path = write_trace_csv(result, target_dir / f"{stem}.csv")

    logger.info(f"攻击完成: {result!r}")
    click.echo(
        f"{trace_path}\tbefore={result.score_before:.6f}\tafter={result.score_after:.6f}\ttarget={tar}"
    )
