"""
常量预设

paper: 全尺寸常量 (n=2, d=32, G=7, S=32, 224×224, 56×56 补丁, 300 次查询)
desk:  桌面规模, 用于快速测试 (d=8, G=4, S=8, 56×56 缩放, 64×64 视频)

预设只提供默认值, 配置文件和命令行参数会覆盖它们.
"""

from typing import Any, Dict, Literal

PresetName = Literal["paper", "desk"]

PAPER_PRESET: Dict[str, Dict[str, Any]] = {
    "dataset": {
        "count": 60,
        "frames": 64,
        "height": 224,
        "width": 224,
    },
    "defense": {
        "skip_interval": 2,
        "frames": 32,
        "grid_count": 7,
        "patch_size": 32,
        "resize_height": 224,
        "resize_width": 224,
        "segments": 16,
    },
    "attack": {
        "query_budget": 300,
        "patch_side": 56,
    },
}

DESK_PRESET: Dict[str, Dict[str, Any]] = {
    "dataset": {
        "count": 60,
        "frames": 20,
        "height": 64,
        "width": 64,
    },
    "defense": {
        "skip_interval": 2,
        "frames": 8,
        "grid_count": 4,
        "patch_size": 8,
        "resize_height": 56,
        "resize_width": 56,
        "segments": 16,
    },
    "attack": {
        "query_budget": 300,
        "patch_side": 16,
    },
}

PRESETS: Dict[str, Dict[str, Dict[str, Any]]] = {
    "paper": PAPER_PRESET,
    "desk": DESK_PRESET,
}


def preset_defaults(name: str) -> Dict[str, Dict[str, Any]]:
    """
    获取预设的分节默认值 (深拷贝, 调用方可以修改)

    Args:
        name: 预设名称 (paper/desk)

    Returns:
        Dict[str, Dict[str, Any]]: section -> {key: value}
    """
    if name not in PRESETS:
        raise KeyError(f"未知预设: {name}")
    return {section: dict(values) for section, values in PRESETS[name].items()}
