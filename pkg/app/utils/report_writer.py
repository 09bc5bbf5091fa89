"""
报告与轨迹文件写出

所有 CSV 使用 LF 换行, 字段顺序固定, 浮点数按 repr 写出; 同一报告重复写出得到相同字节.
耗时 (wall_time) 不写入任何文件, 相同配置与种子的两次运行得到逐字节相同的 report.json.
"""

import csv
import io
import json
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

from loguru import logger

from app.core.exceptions import ReportIOError
from app.models.attack import TRACE_FIELDS, AttackResult
from app.schemas.report import PER_VIDEO_FIELDS, SUMMARY_FIELDS, ExperimentReport, VideoRecord

SUMMARY_FILE = "summary.csv"
PER_VIDEO_FILE = "per_video.csv"
REPORT_FILE = "report.json"
FAILED_FILE = "FAILED"
TRACE_DIR = "traces"


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _render_csv(header: List[str], rows: Iterable[Iterable]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buffer.getvalue()


def _write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as f:
            f.write(text)
    except OSError as e:
        raise ReportIOError(f"写出失败: {e}", path=str(path)) from e
    return path


def render_summary(report: ExperimentReport) -> str:
    row = report.summary_row()
    return _render_csv(SUMMARY_FIELDS, [[row[name] for name in SUMMARY_FIELDS]])


def render_per_video(records: Sequence[VideoRecord]) -> str:
    return _render_csv(
        PER_VIDEO_FIELDS,
        ([getattr(record, name) for name in PER_VIDEO_FIELDS] for record in records),
    )


def write_per_video(records: Sequence[VideoRecord], out_dir: Union[str, Path]) -> Path:
    """写出逐视频 CSV (实验失败时也用于落盘已完成的行)"""
    return _write_text(Path(out_dir) / PER_VIDEO_FILE, render_per_video(records))


def emit_report(report: ExperimentReport, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """
    写出实验报告

    Args:
        report: 实验报告
        out_dir: 输出目录

    Returns:
        Dict[str, Path]: summary / per_video / report 三个文件路径

    Raises:
        ReportIOError: 写出失败, 携带路径
    """
    out_dir = Path(out_dir)
    document = json.dumps(report.model_dump(mode="json"), indent=2, ensure_ascii=False) + "\n"
    paths = {
        "summary": _write_text(out_dir / SUMMARY_FILE, render_summary(report)),
        "per_video": write_per_video(report.records, out_dir),
        "report": _write_text(out_dir / REPORT_FILE, document),
    }
    logger.info(f"报告已写出: {out_dir} ({len(report.records)} 个视频)")
    return paths


def load_report(path: Union[str, Path]) -> ExperimentReport:
    """读取 report.json"""
    return ExperimentReport.model_validate_json(Path(path).read_text(encoding="utf-8"))


def rerender_report(report_path: Union[str, Path], out_dir: Union[str, Path, None] = None) -> Dict[str, Path]:
    """由 report.json 重新生成两个 CSV"""
    report_path = Path(report_path)
    out_dir = Path(out_dir) if out_dir is not None else report_path.parent
    report = load_report(report_path)
    return {
        "summary": _write_text(out_dir / SUMMARY_FILE, render_summary(report)),
        "per_video": write_per_video(report.records, out_dir),
    }


def render_trace(result: AttackResult) -> str:
    return _render_csv(
        TRACE_FIELDS,
        ([r.step, r.score, r.accepted, r.linf_so_far] for r in result.trace),
    )


def write_trace_csv(result: AttackResult, path: Union[str, Path]) -> Path:
    """写出攻击轨迹 CSV (step,score,accepted,linf_so_far)"""
    return _write_text(Path(path), render_trace(result))


def write_failure_marker(out_dir: Union[str, Path], error: BaseException) -> Path:
    return _write_text(Path(out_dir) / FAILED_FILE, f"{type(error).__name__}: {error}\n")
