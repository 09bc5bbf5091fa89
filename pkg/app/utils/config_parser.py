"""
实验配置文档解析

语法 (UTF-8):
    # 注释行与空行忽略
    [section]         开始一个节; 第一个节之前的键属于 [experiment]
    key = <JSON 值>   数字, 双引号字符串, true/false, null, 数组, 对象

优先级从低到高: 预设常量 → 文档 → 命令行参数.
"""

import json
import re
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from loguru import logger
from pydantic import ValidationError

from app.core.config import settings
from app.core.exceptions import ConfigSyntaxError, ConstraintError, UnknownKeyError
from app.core.presets import preset_defaults
from app.schemas.experiment import ExperimentConfig

SECTION_RE = re.compile(r"^\[\s*([A-Za-z_][A-Za-z0-9_]*)\s*\]$")
KEY_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.+)$")
DEFAULT_SECTION = "experiment"

Sections = Dict[str, Dict[str, Any]]


def parse_sections(text: str) -> Tuple[Sections, Dict[Tuple[str, str], int]]:
    """
    把配置文档拆成 节 -> {键: 值}

    Returns:
        (sections, 每个 (节, 键) 所在的行号)

    Raises:
        ConfigSyntaxError: 无法识别的行, 非法 JSON 值, 或同一节内重复的键
    """
    sections: Sections = {}
    lines: Dict[Tuple[str, str], int] = {}
    current = DEFAULT_SECTION
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        section = SECTION_RE.match(line)
        if section:
            current = section.group(1)
            sections.setdefault(current, {})
            continue
        pair = KEY_RE.match(line)
        if not pair:
            raise ConfigSyntaxError(f"无法识别的行: {raw!r}", line=number)
        key, value_text = pair.group(1), pair.group(2).strip()
        try:
            value = json.loads(value_text)
        except json.JSONDecodeError as e:
            raise ConfigSyntaxError(f"{key} 的值不是合法 JSON: {e.msg}", line=number) from e
        bucket = sections.setdefault(current, {})
        if key in bucket:
            raise ConfigSyntaxError(
                f"[{current}] 中重复的键 {key} (首次出现于第 {lines[(current, key)]} 行)",
                line=number,
            )
        bucket[key] = value
        lines[(current, key)] = number
    return sections, lines


def _check_known_keys(sections: Sections, lines: Dict[Tuple[str, str], int]):
    fields = ExperimentConfig.model_fields
    for section, values in sections.items():
        if section not in fields:
            line = min((n for (s, _), n in lines.items() if s == section), default=None)
            raise UnknownKeyError(section, "root", line)
        model = fields[section].annotation
        for key in values:
            if key not in model.model_fields:
                raise UnknownKeyError(key, section, lines.get((section, key)))


def _constraint_error(error: ValidationError) -> ConstraintError:
    first = error.errors()[0]
    field = ".".join(str(part) for part in first["loc"]) or "experiment"
    return ConstraintError(field, first["msg"])


def build_config(
    sections: Sections,
    preset: Optional[str] = None,
    overrides: Optional[Sections] = None,
) -> ExperimentConfig:
    """
    合并预设, 文档与命令行覆盖并校验

    Args:
        sections: 文档解析结果
        preset: 命令行指定的预设, 优先于文档中的 experiment.preset
        overrides: 命令行覆盖 (节 -> {键: 值})

    Raises:
        UnknownKeyError: 未定义的节或键
        ConstraintError: 取值违反约束
    """
    overrides = overrides or {}
    name = preset or sections.get(DEFAULT_SECTION, {}).get("preset") or settings.DEFAULT_PRESET
    try:
        merged = preset_defaults(name)
    except KeyError as e:
        raise ConstraintError("experiment.preset", f"未知预设 {name}") from e

    for layer in (sections, overrides):
        for section, values in layer.items():
            merged.setdefault(section, {}).update(values)
    merged.setdefault(DEFAULT_SECTION, {})["preset"] = name

    _check_known_keys(merged, {})
    try:
        config = ExperimentConfig.model_validate(merged)
    except ValidationError as e:
        raise _constraint_error(e) from e
    logger.debug(f"实验配置: preset={name}, seed={config.experiment.master_seed}")
    return config


def parse_config(
    text: str,
    preset: Optional[str] = None,
    overrides: Optional[Sections] = None,
) -> ExperimentConfig:
    """
    解析实验配置文档

    Args:
        text: 文档内容
        preset: 命令行预设
        overrides: 命令行覆盖

    Returns:
        ExperimentConfig: 校验后的配置

    Raises:
        ConfigSyntaxError: 语法错误, 携带行号
        UnknownKeyError: 未知键, 携带键名
        ConstraintError: 约束错误, 携带字段名
    """
    sections, lines = parse_sections(text)
    _check_known_keys(sections, lines)
    return build_config(sections, preset=preset, overrides=overrides)


def load_config(
    path: Optional[Union[str, Path]],
    preset: Optional[str] = None,
    overrides: Optional[Sections] = None,
) -> ExperimentConfig:
    """读取配置文件; path 为空时只使用预设与覆盖"""
    text = Path(path).read_text(encoding="utf-8") if path is not None else ""
    return parse_config(text, preset=preset, overrides=overrides)
