"""
report: 由 report.json 重新生成 CSV
"""

from pathlib import Path
from typing import Optional

import click

from app.commands import LabContext, pass_lab
from app.core.config import settings
from app.utils.report_writer import REPORT_FILE, rerender_report


@click.command("report")
@click.argument(
    "report_path",
    required=False,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
)
@pass_lab
def command(lab: LabContext, report_path: Optional[Path]):
    """重新渲染 REPORT_PATH (默认 <out>/report.json) 旁的 summary.csv 与 per_video.csv"""
    if report_path is None:
        report_path = (lab.out or settings.OUTPUT_DIR) / REPORT_FILE
    paths = rerender_report(report_path)
    for path in paths.values():
        click.echo(str(path))
