"""
gen: 生成合成数据集 (RVID 文件 + 清单)
"""

import click
from loguru import logger

from app.commands import LabContext, pass_lab
from app.services.synth import generate_dataset
from app.utils.rvid import save_video, write_manifest

DATASET_DIR = "dataset"
MANIFEST_NAME = "manifest.csv"


@click.command("gen")
@pass_lab
def command(lab: LabContext):
    """按配置生成合成数据集, 写出 <out>/dataset/*.rvid 与 manifest.csv"""
    cfg = lab.load()
    target = lab.out_dir(cfg) / DATASET_DIR
    dataset = generate_dataset(cfg.dataset, cfg.experiment.master_seed)

    entries = []
    for item in dataset:
        filename = f"{item.video_id}.rvid"
        save_video(item.video, target / filename)
        entries.append((filename, item.mos))
    manifest = write_manifest(entries, target / MANIFEST_NAME)

    logger.info(f"数据集已写出: {manifest}")
    click.echo(str(manifest))
