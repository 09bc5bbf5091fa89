"""
train: 训练小网络并写出 SVQP 参数文件
"""

from pathlib import Path
from typing import Optional

import click
from loguru import logger

from app.commands import LabContext, pass_lab
from app.core.logging import register_module_logger
from app.services.experiment import build_scorer, load_dataset

PARAMS_NAME = "params.svqp"


@click.command("train")
@click.option(
    "--params-out",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="参数文件路径, 默认 <out>/params.svqp",
)
@pass_lab
def command(lab: LabContext, params_out: Optional[Path]):
    """在数据集上训练双分支小网络"""
    register_module_logger("app.services.training", "training.log")
    cfg = lab.load()
    cfg = cfg.model_copy(
        update={
            "experiment": cfg.experiment.model_copy(update={"scorer": "tinynet", "params_path": None})
        }
    )
    params_out = params_out or lab.out_dir(cfg) / PARAMS_NAME
    dataset = load_dataset(cfg)
    _, training_plcc = build_scorer(cfg, dataset, params_out=params_out)

    logger.info(f"训练完成: PLCC={training_plcc}, 参数文件 {params_out}")
    click.echo(f"{params_out}\tplcc={training_plcc}")
