"""
CLI 子命令

每个模块定义一个 click 命令 `command`, 由 app.main 注册到 securevqa 命令组.
全局参数保存在 LabContext 中, 子命令通过 pass_lab 获取.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import click

from app.schemas.experiment import ExperimentConfig
from app.utils.config_parser import Sections, load_config


@dataclass
class LabContext:
    """全局命令行参数"""

    config_path: Optional[Path] = None
    seed: Optional[int] = None
    out: Optional[Path] = None
    preset: Optional[str] = None

    def overrides(self) -> Sections:
        overrides: Sections = {}
        if self.seed is not None:
            overrides["experiment"] = {"master_seed": self.seed}
        if self.out is not None:
            overrides["output"] = {"out_dir": str(self.out)}
        return overrides

    def load(self) -> ExperimentConfig:
        """按 预设 → 配置文件 → 命令行 的顺序合并并校验"""
        return load_config(self.config_path, preset=self.preset, overrides=self.overrides())

    def out_dir(self, cfg: Optional[ExperimentConfig] = None) -> Path:
        if self.out is not None:
            return self.out
        cfg = cfg or self.load()
        return cfg.output.resolved_dir


pass_lab = click.make_pass_decorator(LabContext)
