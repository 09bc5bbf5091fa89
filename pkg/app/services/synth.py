"""
合成视频生成服务

用解析已知的质量标签替代人工评分数据集:
    mos = 1 + 4·exp(−(a₁·noise_sigma + a₂·blur_radius + a₃·block_size + a₄·temporal_jitter))
底图渲染后按固定顺序施加退化: 模糊 → 块效应 → 噪声 → 亮度抖动.

参数建议范围 (MOS 覆盖约 [1.1, 5]):
    noise_sigma 0–20, blur_radius 0–4, block_size 0–16, temporal_jitter 0–4
"""

import math
from typing import Dict, List

import numpy as np
from loguru import logger
from scipy.ndimage import uniform_filter

from app.models.video import LabeledVideo, quantize
from app.schemas.dataset import DatasetConfig, DegradationSpec
from app.utils.rng import derive_seed, substream

# 标定常数
MOS_COEFFICIENTS = {
    "noise_sigma": 0.08,
    "blur_radius": 0.15,
    "block_size": 0.02,
    "temporal_jitter": 0.25,
}

# 退化参数 -> DatasetConfig 中的上限字段
DEGRADATION_LIMITS = {
    "noise_sigma": "noise_sigma_max",
    "blur_radius": "blur_radius_max",
    "block_size": "block_size_max",
    "temporal_jitter": "temporal_jitter_max",
}
INTEGER_DEGRADATIONS = ("blur_radius", "block_size")


def mos_for_spec(spec: DegradationSpec) -> float:
    """
    由退化描述计算 MOS

    Args:
        spec: 退化描述

    Returns:
        float: [1, 5] 内的 MOS, 各退化参数单调递减
    """
    exponent = sum(coef * float(getattr(spec, name)) for name, coef in MOS_COEFFICIENTS.items())
    return 1.0 + 4.0 * math.exp(-exponent)


def _render_base(spec: DegradationSpec, T: int, H: int, W: int, rng: np.random.Generator) -> np.ndarray:
    """渲染随时间漂移的底图, 返回 (T, H, W, 3) 浮点数组"""
    t = np.arange(T, dtype=np.float64)[:, None, None]
    y = np.arange(H, dtype=np.float64)[None, :, None]
    x = np.arange(W, dtype=np.float64)[None, None, :]

    if spec.base_pattern == "gradient":
        u = np.broadcast_to(np.mod(x + t, W) / W, (T, H, W))
        v = np.broadcast_to(y / H, (T, H, W))
        channels = [40 + 180 * u, 40 + 180 * v, 40 + 90 * (u + v)]
    elif spec.base_pattern == "checker":
        cell = max(2, min(H, W) // 8)
        parity = (np.floor((x + t) / cell) + np.floor(y / cell)) % 2
        value = np.broadcast_to(60 + 130 * parity, (T, H, W))
        channels = [value, 0.8 * value + 20, 0.6 * value + 40]
    else:
        # 若干正弦分量叠加的类 Perlin 条纹, 相位随时间漂移
        field = np.zeros((T, H, W))
        for _ in range(3):
            amplitude = rng.uniform(15, 45)
            fx, fy = rng.uniform(0.5, 4.0, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            velocity = rng.uniform(0.05, 0.3)
            field = field + amplitude * np.sin(
                2 * np.pi * (fx * x / W + fy * y / H) + phase + velocity * t
            )
        channels = [128 + field, 118 + 0.9 * field, 138 - 0.7 * field]

    return np.stack(channels, axis=-1).astype(np.float64)


def _box_blur(frames: np.ndarray, radius: int) -> np.ndarray:
    size = 2 * radius + 1
    return uniform_filter(frames, size=(1, size, size, 1), mode="nearest")


def _blockify(frames: np.ndarray, block: int) -> np.ndarray:
    """每个 block×block 块替换为块内均值 (边缘不完整块同样处理)"""
    _, H, W, _ = frames.shape
    row_starts = np.arange(0, H, block)
    col_starts = np.arange(0, W, block)
    row_sizes = np.diff(np.append(row_starts, H))
    col_sizes = np.diff(np.append(col_starts, W))

    sums = np.add.reduceat(np.add.reduceat(frames, row_starts, axis=1), col_starts, axis=2)
    means = sums / (row_sizes[:, None] * col_sizes[None, :])[None, :, :, None]
    return np.repeat(np.repeat(means, row_sizes, axis=1), col_sizes, axis=2)


def synth_video(spec: DegradationSpec, T: int, H: int, W: int) -> LabeledVideo:
    """
    生成带解析 MOS 的合成视频

    Args:
        spec: 退化描述
        T: 帧数
        H: 帧高
        W: 帧宽

    Returns:
        LabeledVideo: 给定 (spec, T, H, W) 时结果完全确定
    """
    if min(T, H, W) < 1:
        raise ValueError(f"T, H, W 都必须 ≥ 1, 实际为 ({T}, {H}, {W})")

    rng = np.random.default_rng(spec.seed)
    frames = _render_base(spec, T, H, W, rng)

    if spec.blur_radius > 0:
        frames = _box_blur(frames, spec.blur_radius)
    if spec.block_size >= 2:
        frames = _blockify(frames, spec.block_size)
    if spec.noise_sigma > 0:
        frames = frames + rng.normal(0.0, spec.noise_sigma, size=frames.shape)
    if spec.temporal_jitter > 0:
        offsets = rng.normal(0.0, spec.temporal_jitter, size=T)
        frames = frames + offsets[:, None, None, None]

    return LabeledVideo(video=quantize(frames), mos=mos_for_spec(spec))


def _split_exponent(total: float, caps: Dict[str, float], rng: np.random.Generator) -> Dict[str, float]:
    """把目标指数按随机份额分给各退化, 超出上限的部分转给尚未饱和的退化"""
    parts = {name: 0.0 for name in caps}
    open_names = [name for name, cap in caps.items() if cap > 0]
    if not open_names:
        return parts
    weights = dict(zip(open_names, rng.dirichlet(np.ones(len(open_names)))))

    remaining = total
    while remaining > 1e-12 and open_names:
        weight_sum = sum(weights[name] for name in open_names)
        still_open, spent = [], 0.0
        for name in open_names:
            add = remaining * weights[name] / weight_sum
            room = caps[name] - parts[name]
            if add >= room:
                parts[name] = caps[name]
                spent += room
            else:
                parts[name] += add
                spent += add
                still_open.append(name)
        remaining -= spent
        open_names = still_open
    return parts


def draw_spec(cfg: DatasetConfig, master_seed: int, index: int) -> DegradationSpec:
    """
    为数据集第 index 个视频抽取退化描述

    MOS 在 [最低可达 MOS, 5] 上分层抽取: 数据集 count 个视频各占一层 (层的顺序由主种子打乱),
    层内均匀; 目标 MOS 对应的总指数按随机份额分给四种退化, 整数退化向下取整,
    差额补给噪声与亮度抖动. 标签仍由 mos_for_spec 精确计算.

    Args:
        cfg: 数据集配置
        master_seed: 主种子
        index: 视频序号

    Returns:
        DegradationSpec: 各参数不超过配置上限
    """
    rng = substream(master_seed, "dataset", index)
    pattern = cfg.patterns[int(rng.integers(len(cfg.patterns)))]

    strata = substream(master_seed, "dataset_strata").permutation(cfg.count)
    level = (strata[index % cfg.count] + rng.uniform()) / cfg.count

    caps = {
        name: coef * float(getattr(cfg, DEGRADATION_LIMITS[name]))
        for name, coef in MOS_COEFFICIENTS.items()
    }
    exponent_max = sum(caps.values())
    mos_floor = 1.0 + 4.0 * math.exp(-exponent_max)
    target = 5.0 - level * (5.0 - mos_floor)
    exponent = min(exponent_max, -math.log((target - 1.0) / 4.0))

    parts = _split_exponent(exponent, caps, rng)
    params: Dict[str, float] = {}
    used = 0.0
    for name in INTEGER_DEGRADATIONS:
        coef = MOS_COEFFICIENTS[name]
        limit = int(getattr(cfg, DEGRADATION_LIMITS[name]))
        params[name] = min(limit, int(math.floor(parts[name] / coef + 1e-9)))
        used += coef * params[name]

    continuous = [name for name in MOS_COEFFICIENTS if name not in INTEGER_DEGRADATIONS]
    deficit = exponent - used - sum(parts[name] for name in continuous)
    for name in continuous:
        extra = min(max(deficit, 0.0), caps[name] - parts[name])
        parts[name] += extra
        deficit -= extra
        params[name] = parts[name] / MOS_COEFFICIENTS[name]

    return DegradationSpec(
        base_pattern=pattern,
        noise_sigma=float(params["noise_sigma"]),
        blur_radius=int(params["blur_radius"]),
        block_size=int(params["block_size"]),
        temporal_jitter=float(params["temporal_jitter"]),
        seed=derive_seed(master_seed, "synth", index),
    )


def generate_dataset(cfg: DatasetConfig, master_seed: int) -> List[LabeledVideo]:
    """
    生成合成数据集

    Args:
        cfg: 数据集配置
        master_seed: 主种子

    Returns:
        List[LabeledVideo]: video_id 形如 v0000
    """
    logger.info(
        f"开始生成合成数据集: count={cfg.count}, T={cfg.frames}, H={cfg.height}, W={cfg.width}"
    )
    dataset = []
    for index in range(cfg.count):
        spec = draw_spec(cfg, master_seed, index)
        labeled = synth_video(spec, cfg.frames, cfg.height, cfg.width)
        dataset.append(
            LabeledVideo(video=labeled.video, mos=labeled.mos, video_id=f"v{index:04d}")
        )
    mos_values = [item.mos for item in dataset]
    logger.info(f"数据集生成完成, MOS 范围 [{min(mos_values):.3f}, {max(mos_values):.3f}]")
    return dataset
