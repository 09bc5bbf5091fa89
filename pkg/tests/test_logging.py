import json

import pytest
from loguru import logger

from app.core.logging import EVENT_FILE, LoggingManager


@pytest.fixture
def manager(tmp_path):
    manager = LoggingManager()
    manager.setup(tmp_path / "logs", log_level="DEBUG")
    yield manager
    logger.remove()


def test_event_lines_are_json_with_context(manager):
    logger.bind(event=True, experiment="synthetic", seed=7).info("video=v0001 before=3.0")
    logger.info("普通日志")

    lines = (manager.log_dir / EVENT_FILE).read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1
    record = json.loads(lines[0])["record"]
    assert record["message"] == "video=v0001 before=3.0"
    assert record["extra"]["experiment"] == "synthetic"
    assert record["extra"]["seed"] == 7
    assert "普通日志" in (manager.log_dir / "lab.log").read_text(encoding="utf-8")


def test_setup_only_once(manager, tmp_path):
    assert manager.initialized
    manager.setup(tmp_path / "other")
    assert not (tmp_path / "other").exists()


def test_module_logger_filters_by_prefix(manager):
    manager.register_module_logger("app.services.training", "training.log")
    manager.register_module_logger("app.services.training", "training.log")
    assert len(manager.module_sinks) == 1

    logger.patch(lambda r: r.update(name="app.services.training")).info("第 1 轮")
    logger.patch(lambda r: r.update(name="app.services.attack")).info("攻击")
    text = (manager.log_dir / "training.log").read_text(encoding="utf-8")
    assert "第 1 轮" in text
    assert "攻击" not in text


def test_module_logger_requires_setup():
    with pytest.raises(RuntimeError):
        LoggingManager().register_module_logger("app", "app.log")
