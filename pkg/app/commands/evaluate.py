"""
eval: 运行完整实验并写出报告
"""

import click

from app.commands import LabContext, pass_lab
from app.services.experiment import run_experiment
from app.utils.report_writer import emit_report


@click.command("eval")
@pass_lab
def command(lab: LabContext):
    """数据集 → 评分器 → 攻击 → 指标, 报告写入 <out>"""
    cfg = lab.load()
    out_dir = lab.out_dir(cfg)
    report = run_experiment(cfg, out_dir=out_dir)
    paths = emit_report(report, out_dir)
    click.echo(
        f"srcc {report.srcc_before:.4f} -> {report.srcc_after:.4f}, "
        f"plcc {report.plcc_before:.4f} -> {report.plcc_after:.4f}, R={report.r_value:.4f}"
    )
    click.echo(str(paths["summary"]))
