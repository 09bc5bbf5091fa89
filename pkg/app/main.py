"""
securevqa 命令行入口

    securevqa [--config FILE] [--seed N] [--out DIR] [--preset desk|paper] <子命令>

子命令: gen, train, attack, eval, report
业务错误 (LabError) 退出码 2, 其他未预期错误退出码 1.
"""

import sys
from pathlib import Path
from typing import Optional

import click
from loguru import logger

from app.commands import LabContext, attack, dataset, evaluate, report, train
from app.core.config import settings
from app.core.exceptions import LabError
from app.core.logging import setup_logging

EXIT_LAB_ERROR = 2
EXIT_UNEXPECTED = 1


class LabGroup(click.Group):
    """统一把异常映射为退出码"""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except (click.exceptions.Exit, click.ClickException, click.Abort):
            raise
        except LabError as e:
            logger.error(f"{type(e).__name__}: {e}")
            click.echo(f"错误: {e}", err=True)
            sys.exit(EXIT_LAB_ERROR)
        except Exception as e:
            logger.exception(f"未预期的错误: {e}")
            click.echo(f"内部错误: {type(e).__name__}: {e}", err=True)
            sys.exit(EXIT_UNEXPECTED)


@click.group(cls=LabGroup)
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="实验配置文件",
)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="主种子 (覆盖配置)")
@click.option(
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="输出目录 (覆盖配置)",
)
@click.option("--preset", type=click.Choice(["desk", "paper"]), default=None, help="常量预设")
@click.option(
    "--log-level",
    type=click.Choice(["TRACE", "DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    default=None,
    help="日志级别 (默认取 LOG_LEVEL)",
)
@click.version_option(settings.APP_VERSION, prog_name=settings.APP_NAME)
@click.pass_context
def cli(
    ctx: click.Context,
    config_path: Optional[Path],
    seed: Optional[int],
    out: Optional[Path],
    preset: Optional[str],
    log_level: Optional[str],
):
    """SecureVQA 桌面规模实验室"""
    level = (log_level or ("DEBUG" if settings.DEBUG else settings.LOG_LEVEL)).upper()
    setup_logging(
        log_dir=settings.LOG_DIR,
        log_level=level,
        enable_event_log=settings.ENABLE_EVENT_LOG,
    )
    ctx.obj = LabContext(config_path=config_path, seed=seed, out=out, preset=preset)


# 注册子命令
cli.add_command(dataset.command)
cli.add_command(train.command)
cli.add_command(attack.command)
cli.add_command(evaluate.command)
cli.add_command(report.command)


if __name__ == "__main__":
    cli()
