"""
SVQP 网络参数文件

布局 (小端):
    magic   4 字节 ASCII "SVQP"
    version u16 = 1
    之后是若干命名张量, 直到流结束:
        name_len u16, name (UTF-8), rank u8, dims u32×rank, 值 f64×prod(dims)
张量按名称排序写出, 同一参数集得到相同字节.
"""

import struct
from pathlib import Path
from typing import BinaryIO, Dict, Union

import numpy as np
from loguru import logger

from app.core.exceptions import FormatError, TruncatedError, UnsupportedError, VideoIOError
from app.services.tinynet import TinyNetParams

MAGIC = b"SVQP"
VERSION = 1
PREFIX = struct.Struct("<4sH")
NAME_LEN = struct.Struct("<H")
RANK = struct.Struct("<B")


def _read_exact(source: BinaryIO, size: int, what: str) -> bytes:
    data = source.read(size)
    if len(data) < size:
        raise TruncatedError(f"{what} 不完整: 需要 {size} 字节, 实际 {len(data)} 字节")
    return data


def encode_params(params: TinyNetParams) -> bytes:
    """序列化为 SVQP 字节串"""
    chunks = [PREFIX.pack(MAGIC, VERSION)]
    for name in sorted(params.tensors):
        tensor = np.ascontiguousarray(params.tensors[name], dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(NAME_LEN.pack(len(encoded)) + encoded)
        chunks.append(RANK.pack(tensor.ndim))
        chunks.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        chunks.append(tensor.tobytes())
    return b"".join(chunks)


def read_params(source: BinaryIO) -> TinyNetParams:
    """
    解析 SVQP 流

    Raises:
        FormatError: 魔数错误, 张量名非 UTF-8 或重复
        TruncatedError: 数据不完整
        UnsupportedError: 版本不受支持
        ModelError: 张量集合与网络结构不符
    """
    prefix = source.read(PREFIX.size)
    if len(prefix) < len(MAGIC) or prefix[: len(MAGIC)] != MAGIC:
        raise FormatError(f"魔数错误: {prefix[:4]!r}")
    if len(prefix) < PREFIX.size:
        raise TruncatedError("SVQP 头部不完整")
    _, version = PREFIX.unpack(prefix)
    if version != VERSION:
        raise UnsupportedError(f"不支持的 SVQP 版本: {version}")

    tensors: Dict[str, np.ndarray] = {}
    while True:
        head = source.read(NAME_LEN.size)
        if not head:
            break
        if len(head) < NAME_LEN.size:
            raise TruncatedError("张量名长度不完整")
        (name_len,) = NAME_LEN.unpack(head)
        raw_name = _read_exact(source, name_len, "张量名")
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"张量名不是 UTF-8: {raw_name!r}") from e
        if name in tensors:
            raise FormatError(f"张量名重复: {name}")
        (rank,) = RANK.unpack(_read_exact(source, RANK.size, f"{name} 的秩"))
        dims = struct.unpack(f"<{rank}I", _read_exact(source, 4 * rank, f"{name} 的维度"))
        count = int(np.prod(dims)) if rank else 1
        values = np.frombuffer(_read_exact(source, 8 * count, f"{name} 的数据"), dtype="<f8")
        tensors[name] = values.astype(np.float64).reshape(dims)
    return TinyNetParams(tensors)


def save_params(params: TinyNetParams, path: Union[str, Path]) -> int:
    """写出参数文件, 返回字节数"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = encode_params(params)
    try:
        path.write_bytes(data)
    except OSError as e:
        raise VideoIOError(f"写入参数文件 {path} 失败: {e}", bytes_written=0) from e
    logger.info(f"网络参数已保存: {path} ({len(data)} 字节)")
    return len(data)


def load_params(path: Union[str, Path]) -> TinyNetParams:
    """读取参数文件"""
    with Path(path).open("rb") as f:
        params = read_params(f)
    logger.info(f"网络参数已加载: {path}")
    return params
