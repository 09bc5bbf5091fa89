"""
确定性随机数子流

每个随机来源 (数据集, 初始化, 防御, 攻击) 都由 (主种子, 组件标签, 条目序号) 派生独立子流,
因此串行与并行执行得到完全相同的结果.
"""

import zlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def _tag_key(tag: str) -> int:
    """组件标签映射为稳定整数 (跨平台/跨进程一致, 不依赖 hash())"""
    return zlib.crc32(tag.encode("utf-8"))


def derive_seed(master_seed: int, tag: str, index: int = 0) -> int:
    """
    派生 64 位子种子

    Args:
        master_seed: 主种子 (u64)
        tag: 组件标签, 如 "dataset", "attack"
        index: 条目序号 (视频编号等)

    Returns:
        int: 64 位无符号整数
    """
    sequence = np.random.SeedSequence([master_seed & SEED_MASK, _tag_key(tag), index])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def substream(master_seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """
    获取子流生成器

    Args:
        master_seed: 主种子
        tag: 组件标签
        index: 条目序号

    Returns:
        np.random.Generator: PCG64 生成器
    """
    sequence = np.random.SeedSequence([master_seed & SEED_MASK, _tag_key(tag), index])
    return np.random.default_rng(sequence)
