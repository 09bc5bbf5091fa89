from typing import Literal
from pathlib import Path
from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field


class Settings(BaseSettings):
    """进程级配置，从环境变量读取 (实验参数见 app.schemas.experiment)"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",  # 忽略未定义的额外环境变量
    )

    # 应用基础配置
    APP_NAME: str = "SecureVQA Lab"
    APP_VERSION: str = "0.1.0"
    DEBUG: bool = False

    BASE_PATH: Path = Path(__file__).resolve().parent.parent

    # 日志配置
    LOG_LEVEL: str = Field(
        default="INFO", description="日志级别 (DEBUG/INFO/WARNING/ERROR/CRITICAL)"
    )
    LOG_DIR: Path = Field(
        default_factory=lambda: Path(__file__).resolve().parent.parent.parent / "logs",
        description="日志目录路径",
    )
    ENABLE_EVENT_LOG: bool = Field(
        default=True, description="是否启用实验事件日志 (events.jsonl)"
    )

    # 实验默认值
    DEFAULT_PRESET: Literal["paper", "desk"] = Field(
        default="paper", description="配置文件未指定 preset 时使用的常量集"
    )
    OUTPUT_DIR: Path = Field(
        default_factory=lambda: Path(__file__).resolve().parent.parent.parent / "output",
        description="报告与数据集的默认输出目录",
    )
    WORKERS: int = Field(
        default=1, ge=1, description="逐视频打分/攻击的线程数, 1 表示串行"
    )

    # 评分尺度 (MOS 区间)
    SCORE_MIN: float = Field(default=1.0, description="评分区间下界")
    SCORE_MAX: float = Field(default=5.0, description="评分区间上界")


settings = Settings()
