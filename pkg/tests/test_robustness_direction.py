"""
经验方向检查: 训练好的小网络在桌面预设下的攻击/防御效果

只检查比较方向, 不检查数值大小; 默认不运行 (pytest -m slow).
20 个桌面预设视频训练一次, 各防御配置共用同一组参数.
"""

import numpy as np
import pytest

from app.core.presets import preset_defaults
from app.schemas.experiment import ExperimentConfig
from app.services.experiment import build_scorer, load_dataset, run_experiment

pytestmark = pytest.mark.slow

NO_DEFENSE = {
    "intra_guardian": False,
    "inter_guardian": False,
    "grid_sampling": False,
    "inter_branch": False,
}


def desk_tinynet(params_path=None, **defense) -> ExperimentConfig:
    values = preset_defaults("desk")
    values["experiment"] = {
        "master_seed": 5,
        "preset": "desk",
        "scorer": "tinynet",
        "params_path": str(params_path) if params_path else None,
        "attack_subset": 20,
    }
    values["dataset"]["count"] = 20
    values["defense"].update(defense)
    values["train"] = {"defense": "off"}
    return ExperimentConfig.model_validate(values)


def median_shift(report) -> float:
    return float(np.median([r.shift_toward_target for r in report.records]))


@pytest.fixture(scope="module")
def params_path(tmp_path_factory):
    cfg = desk_tinynet()
    path = tmp_path_factory.mktemp("tinynet") / "params.svqp"
    build_scorer(cfg, load_dataset(cfg), params_out=path)
    return path


@pytest.fixture(scope="module")
def undefended(params_path):
    return run_experiment(desk_tinynet(params_path, **NO_DEFENSE))


@pytest.fixture(scope="module")
def defended(params_path):
    return run_experiment(desk_tinynet(params_path))


def test_attack_degrades_undefended_scorer(undefended):
    assert median_shift(undefended) > 0
    assert undefended.srcc_after < undefended.srcc_before


def test_full_defense_limits_shift(undefended, defended):
    assert median_shift(defended) <= 0.5 * median_shift(undefended)
    assert defended.r_value > undefended.r_value


@pytest.mark.parametrize(
    "strategy",
    [
        {"intra_guardian": True, "inter_guardian": True},
        {"grid_sampling": True},
        {"inter_branch": True},
    ],
    ids=["guardian", "grid", "inter_branch"],
)
def test_each_strategy_beats_baseline(params_path, undefended, strategy):
    report = run_experiment(desk_tinynet(params_path, **{**NO_DEFENSE, **strategy}))
    assert report.r_value > undefended.r_value


def test_guardian_region_ordering(params_path, defended):
    no_guardian = run_experiment(desk_tinynet(params_path, intra_guardian=False, inter_guardian=False))
    attacked_only = run_experiment(desk_tinynet(params_path, guardian_region="attacked_only"))
    untouched_only = run_experiment(desk_tinynet(params_path, guardian_region="untouched_only"))
    shifts = [median_shift(r) for r in (no_guardian, attacked_only, untouched_only, defended)]
    assert shifts == sorted(shifts, reverse=True)
