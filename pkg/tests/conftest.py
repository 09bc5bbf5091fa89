"""
测试公共夹具
"""

import numpy as np
import pytest

from app.core.presets import DESK_PRESET
from app.models.video import Video
from app.schemas.defense import DefenseConfig
from app.services.tinynet import init_params


def random_video(rng: np.random.Generator, T: int, H: int, W: int, low: int = 0, high: int = 256) -> Video:
    return Video(pixels=rng.integers(low, high, size=(T, H, W, 3), dtype=np.uint8))


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


@pytest.fixture
def small_video(rng):
    """远离 0/255 的像素, 守护图截断不会生效"""
    return random_video(rng, 4, 32, 32, low=2, high=254)


@pytest.fixture
def desk_defense():
    return DefenseConfig(**DESK_PRESET["defense"])


@pytest.fixture
def tiny_defense():
    """适配 4×32×32 视频的小几何参数"""
    return DefenseConfig(
        skip_interval=1,
        frames=3,
        grid_count=4,
        patch_size=4,
        resize_height=12,
        resize_width=12,
        segments=16,
    )


@pytest.fixture
def tiny_params():
    return init_params(np.random.default_rng(7))


@pytest.fixture(autouse=True)
def isolated_output(tmp_path, monkeypatch):
    """日志与输出写入临时目录"""
    from app.core.config import settings

    monkeypatch.setattr(settings, "LOG_DIR", tmp_path / "logs")
    monkeypatch.setattr(settings, "OUTPUT_DIR", tmp_path / "output")
    return tmp_path
