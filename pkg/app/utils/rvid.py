"""
RVID 视频容器与数据集清单

RVID (小端):
    magic   4 字节 ASCII "RVID"
    version u16 = 1
    T, H, W u32
    channels u8 = 3
    之后是 T·H·W·3 个像素字节 (帧优先, 行优先, RGB 交错)
头部共 19 字节. 容器不做任何压缩, 保证对抗扰动在读写后逐比特不变.

清单: UTF-8 CSV, 表头 `path,mos`, 每个视频一行, 相对路径相对于清单所在目录.
"""

import csv
import math
import struct
from pathlib import Path
from typing import BinaryIO, List, Tuple, Union

import numpy as np
from loguru import logger

from app.core.exceptions import (
    FormatError,
    TruncatedError,
    UnsupportedError,
    VideoIOError,
)
from app.models.video import CHANNELS, LabeledVideo, Video

MAGIC = b"RVID"
VERSION = 1
HEADER = struct.Struct("<4sHIIIB")
HEADER_SIZE = HEADER.size  # 19

MANIFEST_FIELDS = ["path", "mos"]


def write_video(video: Video, destination: BinaryIO) -> int:
    """
    写出 RVID 容器

    Args:
        video: 待写出的视频
        destination: 二进制写入目标

    Returns:
        int: 写出的总字节数 (19 + T·H·W·3)

    Raises:
        VideoIOError: 写入失败, bytes_written 为失败前已写出的字节数
    """
    header = HEADER.pack(MAGIC, VERSION, video.frames, video.height, video.width, CHANNELS)
    written = 0
    for chunk in (header, np.ascontiguousarray(video.pixels).tobytes()):
        try:
            count = destination.write(chunk)
        except OSError as e:
            raise VideoIOError(f"写入 RVID 失败: {e}", bytes_written=written) from e
        # 部分 sink 不返回写入量, 视为全部写入
        count = len(chunk) if count is None else count
        written += count
        if count != len(chunk):
            raise VideoIOError(
                f"写入 RVID 不完整: 期望 {len(chunk)} 字节, 实际 {count} 字节",
                bytes_written=written,
            )
    return written


def read_video(source: BinaryIO) -> Video:
    """
    解析 RVID 容器

    Args:
        source: 二进制读取源

    Returns:
        Video: 解析出的视频

    Raises:
        FormatError: 魔数错误或尺寸为 0
        TruncatedError: 头部或像素数据不完整
        UnsupportedError: 版本或通道数不受支持
    """
    header = source.read(HEADER_SIZE)
    if len(header) < len(MAGIC) or header[: len(MAGIC)] != MAGIC:
        raise FormatError(f"魔数错误: {header[:4]!r}")
    if len(header) < HEADER_SIZE:
        raise TruncatedError(f"头部不完整: 需要 {HEADER_SIZE} 字节, 实际 {len(header)} 字节")

    _, version, frames, height, width, channels = HEADER.unpack(header)
    if version != VERSION:
        raise UnsupportedError(f"不支持的 RVID 版本: {version}")
    if channels != CHANNELS:
        raise UnsupportedError(f"不支持的通道数: {channels}")
    if min(frames, height, width) < 1:
        raise FormatError(f"非法尺寸: T={frames}, H={height}, W={width}")

    expected = frames * height * width * channels
    payload = source.read(expected)
    if len(payload) < expected:
        raise TruncatedError(f"像素数据不完整: 声明 {expected} 字节, 实际 {len(payload)} 字节")

    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(frames, height, width, channels)
    return Video(pixels=pixels.copy())


def save_video(video: Video, path: Union[str, Path]) -> int:
    """写出视频文件, 返回字节数"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        return write_video(video, f)


def load_video(path: Union[str, Path]) -> Video:
    """读取视频文件"""
    with Path(path).open("rb") as f:
        return read_video(f)


def write_manifest(entries: List[Tuple[str, float]], path: Union[str, Path]) -> Path:
    """
    写出数据集清单

    Args:
        entries: (相对路径, MOS) 列表
        path: 清单文件路径

    Returns:
        Path: 清单路径
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for video_path, mos in entries:
            writer.writerow([video_path, repr(float(mos))])
    logger.debug(f"清单已写出: {path}, 共 {len(entries)} 条")
    return path


def read_manifest(path: Union[str, Path]) -> List[LabeledVideo]:
    """
    读取数据集清单并加载所有视频

    Args:
        path: 清单文件路径

    Returns:
        List[LabeledVideo]: 按清单顺序排列, video_id 取文件名 (不含扩展名)

    Raises:
        FormatError: 非 UTF-8 文本, 表头不符, 行缺列或 MOS 不是有限数
    """
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != MANIFEST_FIELDS:
                raise FormatError(f"清单表头必须为 {','.join(MANIFEST_FIELDS)}, 实际为 {reader.fieldnames}")
            rows = list(reader)
    except UnicodeDecodeError as e:
        raise FormatError(f"清单 {path} 不是 UTF-8 文本: {e.reason}") from e

    dataset = []
    for line, row in enumerate(rows, start=2):
        if row["path"] is None or row["mos"] is None or None in row:
            raise FormatError(f"清单第 {line} 行列数不是 {len(MANIFEST_FIELDS)}")
        try:
            mos = float(row["mos"])
        except ValueError as e:
            raise FormatError(f"清单第 {line} 行 MOS 不是数值: {row['mos']!r}") from e
        if not math.isfinite(mos):
            raise FormatError(f"清单第 {line} 行 MOS 不是有限数: {row['mos']}")

        video_path = Path(row["path"])
        if not video_path.is_absolute():
            video_path = path.parent / video_path
        video = load_video(video_path)
        dataset.append(LabeledVideo(video=video, mos=mos, video_id=video_path.stem))
    logger.info(f"已加载清单 {path}: {len(dataset)} 个视频")
    return dataset
