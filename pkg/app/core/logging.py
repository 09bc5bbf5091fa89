"""
日志配置

所有模块直接使用 loguru 的 logger; 本模块只负责安装输出端:

    stderr        彩色控制台
    lab.log       全部日志
    error.log     ERROR 及以上, 附带异常栈
    events.jsonl  实验事件 (logger.bind(event=True)), 每行一个 JSON 对象
    <module>.log  通过 register_module_logger 为单个模块额外开的文件

使用方式:
    from app.core.logging import setup_logging, get_event_logger
    setup_logging(log_dir=settings.LOG_DIR, log_level="INFO")

    events = get_event_logger(experiment="synthetic", seed=7)
    events.info("video=v0003 before=3.21 after=3.05")
"""

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional

from loguru import logger

FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}"
CONSOLE_FORMAT = (
    "<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)
EVENT_FILE = "events.jsonl"


@dataclass(frozen=True)
class FileSink:
    """一个按大小轮转的日志文件"""

    filename: str
    level: Optional[str] = None  # None 表示跟随全局级别
    rotation: str = "50 MB"
    retention: str = "30 days"
    with_exception: bool = False

    def add(self, log_dir: Path, level: str, record_filter: Optional[Callable] = None) -> int:
        fmt = FILE_FORMAT + ("\n{exception}" if self.with_exception else "")
        return logger.add(
            log_dir / self.filename,
            format=fmt,
            level=self.level or level,
            rotation=self.rotation,
            retention=self.retention,
            compression="zip",
            encoding="utf-8",
            filter=record_filter,
        )


MAIN_SINK = FileSink("lab.log", rotation="100 MB")
ERROR_SINK = FileSink("error.log", level="ERROR", retention="90 days", with_exception=True)


def _is_event(record) -> bool:
    return bool(record["extra"].get("event", False))


class LoggingManager:
    """日志管理器: 记录日志目录和已注册的模块文件, 保证只初始化一次"""

    def __init__(self):
        self.log_dir: Optional[Path] = None
        self.level: str = "INFO"
        self.module_sinks: Dict[str, int] = {}  # 模块名前缀 -> loguru handler id
        self._initialized = False

    @property
    def initialized(self) -> bool:
        return self._initialized

    def setup(self, log_dir: Path, log_level: str = "INFO", enable_event_log: bool = True):
        """
        安装控制台与文件输出端

        Args:
            log_dir: 日志目录, 不存在时创建
            log_level: 控制台与 lab.log 的级别
            enable_event_log: 是否写 events.jsonl
        """
        if self._initialized:
            logger.debug("日志系统已初始化, 跳过")
            return

        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.level = log_level

        logger.remove()
        logger.add(sys.stderr, format=CONSOLE_FORMAT, level=log_level, colorize=True)
        MAIN_SINK.add(self.log_dir, log_level)
        ERROR_SINK.add(self.log_dir, log_level)
        if enable_event_log:
            # serialize=True: message 与 bind 的上下文一起写成 JSON
            logger.add(
                self.log_dir / EVENT_FILE,
                level="INFO",
                rotation="100 MB",
                retention="30 days",
                encoding="utf-8",
                filter=_is_event,
                serialize=True,
            )

        self._initialized = True
        logger.debug(f"日志目录: {self.log_dir}, 级别: {log_level}")

    def register_module_logger(self, module_name: str, log_filename: str, log_level: str = "DEBUG"):
        """
        为某个模块 (及其子模块) 额外写一个日志文件, 同一模块只注册一次

        Args:
            module_name: 模块名前缀, 如 "app.services.training"
            log_filename: 日志目录下的文件名
            log_level: 该文件的级别

        Raises:
            RuntimeError: 日志系统尚未初始化
        """
        if not self._initialized or self.log_dir is None:
            raise RuntimeError("日志系统尚未初始化, 请先调用 setup_logging()")
        if module_name in self.module_sinks:
            return

        def module_filter(record) -> bool:
            return record["name"].startswith(module_name)

        sink = FileSink(log_filename, level=log_level, with_exception=True)
        self.module_sinks[module_name] = sink.add(self.log_dir, log_level, record_filter=module_filter)
        logger.info(f"模块 {module_name} 的日志另写入 {log_filename}")


_logging_manager = LoggingManager()


def setup_logging(log_dir: Path, log_level: str = "INFO", enable_event_log: bool = True):
    _logging_manager.setup(log_dir, log_level, enable_event_log)


def register_module_logger(module_name: str, log_filename: str, log_level: str = "DEBUG"):
    _logging_manager.register_module_logger(module_name, log_filename, log_level)


def get_event_logger(**context):
    """
    实验事件 logger

    Args:
        **context: 绑定到每条事件上的字段 (如 experiment, seed)

    Returns:
        绑定了 event=True 的 loguru logger; 未启用事件日志时只进入普通输出端
    """
    return logger.bind(event=True, **context)
