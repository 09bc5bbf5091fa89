"""
双分支小网络评分器

结构:
    帧内分支: 跳帧采样 → 网格碎片化 (或直接缩放) → 守护图 → 帧内编码器
              帧内编码器 = 3→8 通道 3×3 卷积 + ReLU + 逐通道均值/标准差池化 + 仿射 (D_intra=32)
    帧间分支: 连续采样 → 双线性缩放 → 守护图 → 帧间编码器
              帧间编码器 = 帧差按时间切成 K 段, 每段取逐通道 mean|Δ| 与 var(Δ) + 仿射 (D_inter=16)
    融合:     E_fuse^intra = E^intra + B_inter→intra(E^inter_k)
              E_fuse^inter = E^inter_k + B_intra→inter(E^intra)
              B 为 FC-ReLU-FC-ReLU-FC 瓶颈, 隐藏宽度 16
    头部:     s_k = FC(GeLU(FC(concat(E_fuse^intra, E_fuse^inter)))), score = mean_k s_k

所有梯度手工推导 (反向模式); 随机变换在实际抽取值处求导:
复制类变换按索引散射梯度, 缩放乘双线性矩阵的转置, 守护图加法在截断未生效处为恒等.
"""

from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from loguru import logger
from numpy.typing import NDArray

from app.core.exceptions import ModelError
from app.models.video import FloatVideo, VideoLike, as_float
from app.schemas.defense import DefenseConfig
from app.services.defense import BranchInput, draw_start_frames, inter_branch_input, intra_branch_input
from app.services.scorers import BaseScorer

D_INTRA = 32
D_INTER = 16
D_HIDDEN = 16
HEAD_HIDDEN = 32
CONV_CHANNELS = 8
INTER_FEATURES = 6
POOL_EPS = 1e-6
# 帧差特征在 0–1 尺度上很小, 放大到 O(0.1–1) 便于训练
INTER_ABS_SCALE = 10.0
INTER_VAR_SCALE = 100.0
GELU_C = float(np.sqrt(2.0 / np.pi))

PARAM_SHAPES: Dict[str, Tuple[int, ...]] = {
    "conv.w": (CONV_CHANNELS, 3, 3, 3),
    "conv.b": (CONV_CHANNELS,),
    "intra.w": (D_INTRA, 2 * CONV_CHANNELS),
    "intra.b": (D_INTRA,),
    "inter.w": (D_INTER, INTER_FEATURES),
    "inter.b": (D_INTER,),
    "b_inter2intra.0.w": (D_HIDDEN, D_INTER),
    "b_inter2intra.0.b": (D_HIDDEN,),
    "b_inter2intra.1.w": (D_HIDDEN, D_HIDDEN),
    "b_inter2intra.1.b": (D_HIDDEN,),
    "b_inter2intra.2.w": (D_INTRA, D_HIDDEN),
    "b_inter2intra.2.b": (D_INTRA,),
    "b_intra2inter.0.w": (D_HIDDEN, D_INTRA),
    "b_intra2inter.0.b": (D_HIDDEN,),
    "b_intra2inter.1.w": (D_HIDDEN, D_HIDDEN),
    "b_intra2inter.1.b": (D_HIDDEN,),
    "b_intra2inter.2.w": (D_INTER, D_HIDDEN),
    "b_intra2inter.2.b": (D_INTER,),
    "head.0.w": (HEAD_HIDDEN, D_INTRA + D_INTER),
    "head.0.b": (HEAD_HIDDEN,),
    "head.1.w": (1, HEAD_HIDDEN),
    "head.1.b": (1,),
}

INTER_ENCODER_PARAMS = ("inter.w", "inter.b")


@dataclass
class TinyNetParams:
    """网络参数: 名称 -> float64 张量"""

    tensors: Dict[str, NDArray[np.float64]]

    def __post_init__(self):
        self.validate()

    def validate(self):
        missing = sorted(set(PARAM_SHAPES) - set(self.tensors))
        extra = sorted(set(self.tensors) - set(PARAM_SHAPES))
        if missing or extra:
            raise ModelError(f"参数名不匹配: 缺少 {missing}, 多余 {extra}")
        for name, shape in PARAM_SHAPES.items():
            tensor = self.tensors[name]
            if tuple(tensor.shape) != shape:
                raise ModelError(f"参数 {name} 形状应为 {shape}, 实际为 {tuple(tensor.shape)}")
            if not np.all(np.isfinite(tensor)):
                raise ModelError(f"参数 {name} 含有非有限值")

    def __getitem__(self, name: str) -> NDArray[np.float64]:
        return self.tensors[name]

    def copy(self) -> "TinyNetParams":
        return TinyNetParams({name: t.copy() for name, t in self.tensors.items()})

    def zeros_like(self) -> Dict[str, NDArray[np.float64]]:
        return {name: np.zeros_like(t) for name, t in self.tensors.items()}


def _fan_in(name: str) -> int:
    weight = name[:-1] + "w"
    return int(np.prod(PARAM_SHAPES[weight][1:]))


def init_params(rng: np.random.Generator, zero_bottleneck: bool = False) -> TinyNetParams:
    """
    初始化参数: 均匀分布 [−k, k], k = 1/√fan_in

    Args:
        rng: 随机数生成器
        zero_bottleneck: 两个瓶颈全部置零 (融合退化为恒等)
    """
    tensors = {}
    for name, shape in PARAM_SHAPES.items():
        bound = 1.0 / np.sqrt(_fan_in(name))
        tensors[name] = rng.uniform(-bound, bound, size=shape)
        if zero_bottleneck and name.startswith("b_"):
            tensors[name] = np.zeros(shape)
    return TinyNetParams(tensors)


@dataclass(frozen=True)
class EmbeddingVec:
    """分支嵌入 (融合前)"""

    values: NDArray[np.float64]
    branch: str  # intra / inter


class TinyNetOutput(NamedTuple):
    score: float
    intra: EmbeddingVec
    inter: EmbeddingVec
    fused_intra: NDArray[np.float64]  # (K, D_intra)
    fused_inter: NDArray[np.float64]  # (K, D_inter)


# ---------------------------------------------------------------------------
# 编码器
# ---------------------------------------------------------------------------


def _intra_encode(frames: NDArray, params: TinyNetParams) -> Tuple[NDArray, dict]:
    if frames.shape[1] < 3 or frames.shape[2] < 3:
        raise ModelError(f"帧内输入 {frames.shape[1]}×{frames.shape[2]} 小于卷积核 3×3")
    z = frames / 255.0 - 0.5
    h, w = z.shape[1] - 2, z.shape[2] - 2
    conv_w, conv_b = params["conv.w"], params["conv.b"]

    pre = np.broadcast_to(conv_b, (z.shape[0], h, w, CONV_CHANNELS)).copy()
    for i in range(3):
        for j in range(3):
            pre += z[:, i : i + h, j : j + w, :] @ conv_w[:, :, i, j].T
    act = np.maximum(pre, 0.0)

    count = act.shape[0] * h * w
    mean = act.mean(axis=(0, 1, 2))
    centered = act - mean
    std = np.sqrt((centered**2).mean(axis=(0, 1, 2)) + POOL_EPS)
    feat = np.concatenate([mean, std])
    embedding = params["intra.w"] @ feat + params["intra.b"]
    cache = {"z": z, "pre": pre, "centered": centered, "std": std, "feat": feat, "count": count}
    return embedding, cache


def _intra_encode_backward(
    g_emb: NDArray, cache: dict, params: TinyNetParams, grads: Optional[dict], want_input: bool
) -> Optional[NDArray]:
    feat = cache["feat"]
    if grads is not None:
        grads["intra.w"] += np.outer(g_emb, feat)
        grads["intra.b"] += g_emb
    g_feat = params["intra.w"].T @ g_emb
    g_mean, g_std = g_feat[:CONV_CHANNELS], g_feat[CONV_CHANNELS:]
    count = cache["count"]
    g_act = g_mean / count + g_std * cache["centered"] / (count * cache["std"])
    g_pre = g_act * (cache["pre"] > 0)

    z = cache["z"]
    h, w = g_pre.shape[1], g_pre.shape[2]
    conv_w = params["conv.w"]
    if grads is not None:
        grads["conv.b"] += g_pre.sum(axis=(0, 1, 2))
        for i in range(3):
            for j in range(3):
                grads["conv.w"][:, :, i, j] += np.tensordot(
                    g_pre, z[:, i : i + h, j : j + w, :], axes=([0, 1, 2], [0, 1, 2])
                )
    if not want_input:
        return None
    g_z = np.zeros_like(z)
    for i in range(3):
        for j in range(3):
            g_z[:, i : i + h, j : j + w, :] += g_pre @ conv_w[:, :, i, j]
    return g_z / 255.0


def _segments(count: int, segments: int) -> List[NDArray[np.int64]]:
    return np.array_split(np.arange(count), min(segments, count))


def _inter_encode(frames: NDArray, params: TinyNetParams, segments: int) -> Tuple[NDArray, dict]:
    if frames.shape[0] < 2:
        raise ModelError("帧间分支至少需要 2 帧")
    z = frames / 255.0
    diff = z[1:] - z[:-1]
    chunks = _segments(diff.shape[0], segments)
    feats, centered, counts = [], [], []
    for chunk in chunks:
        part = diff[chunk]
        count = part.shape[0] * part.shape[1] * part.shape[2]
        cen = part - part.mean(axis=(0, 1, 2))
        feats.append(
            np.concatenate(
                [
                    INTER_ABS_SCALE * np.abs(part).mean(axis=(0, 1, 2)),
                    INTER_VAR_SCALE * (cen**2).mean(axis=(0, 1, 2)),
                ]
            )
        )
        centered.append(cen)
        counts.append(count)
    feats = np.stack(feats)
    embeddings = feats @ params["inter.w"].T + params["inter.b"]
    cache = {"diff": diff, "chunks": chunks, "feats": feats, "centered": centered, "counts": counts}
    return embeddings, cache


def _inter_encode_backward(
    g_emb: NDArray, cache: dict, params: TinyNetParams, grads: Optional[dict], want_input: bool
) -> Optional[NDArray]:
    if grads is not None:
        grads["inter.w"] += g_emb.T @ cache["feats"]
        grads["inter.b"] += g_emb.sum(axis=0)
    if not want_input:
        return None
    g_feats = g_emb @ params["inter.w"]
    diff = cache["diff"]
    g_diff = np.zeros_like(diff)
    for k, chunk in enumerate(cache["chunks"]):
        part, count = diff[chunk], cache["counts"][k]
        g_abs = INTER_ABS_SCALE * g_feats[k, :3]
        g_var = INTER_VAR_SCALE * g_feats[k, 3:]
        g_diff[chunk] = g_abs * np.sign(part) / count + g_var * 2.0 * cache["centered"][k] / count
    g_z = np.zeros((diff.shape[0] + 1,) + diff.shape[1:])
    g_z[1:] += g_diff
    g_z[:-1] -= g_diff
    return g_z / 255.0


# ---------------------------------------------------------------------------
# 融合与头部
# ---------------------------------------------------------------------------


def _bottleneck(x: NDArray, params: TinyNetParams, prefix: str) -> Tuple[NDArray, dict]:
    """FC → ReLU → FC → ReLU → FC, x 形状 (K, D_in)"""
    u1 = x @ params[f"{prefix}.0.w"].T + params[f"{prefix}.0.b"]
    r1 = np.maximum(u1, 0.0)
    u2 = r1 @ params[f"{prefix}.1.w"].T + params[f"{prefix}.1.b"]
    r2 = np.maximum(u2, 0.0)
    y = r2 @ params[f"{prefix}.2.w"].T + params[f"{prefix}.2.b"]
    return y, {"x": x, "u1": u1, "r1": r1, "u2": u2, "r2": r2}


def _bottleneck_backward(
    g_y: NDArray, cache: dict, params: TinyNetParams, prefix: str, grads: Optional[dict]
) -> NDArray:
    if grads is not None:
        grads[f"{prefix}.2.w"] += g_y.T @ cache["r2"]
        grads[f"{prefix}.2.b"] += g_y.sum(axis=0)
    g_u2 = (g_y @ params[f"{prefix}.2.w"]) * (cache["u2"] > 0)
    if grads is not None:
        grads[f"{prefix}.1.w"] += g_u2.T @ cache["r1"]
        grads[f"{prefix}.1.b"] += g_u2.sum(axis=0)
    g_u1 = (g_u2 @ params[f"{prefix}.1.w"]) * (cache["u1"] > 0)
    if grads is not None:
        grads[f"{prefix}.0.w"] += g_u1.T @ cache["x"]
        grads[f"{prefix}.0.b"] += g_u1.sum(axis=0)
    return g_u1 @ params[f"{prefix}.0.w"]


def _gelu(x: NDArray) -> Tuple[NDArray, NDArray]:
    """tanh 近似 GeLU, 返回 (值, 导数)"""
    inner = GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    value = 0.5 * x * (1.0 + t)
    deriv = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * GELU_C * (1.0 + 3 * 0.044715 * x**2)
    return value, deriv


@dataclass
class _ForwardCache:
    x_shape: Tuple[int, ...]
    intra_input: BranchInput
    inter_input: Optional[BranchInput]
    intra_cache: dict
    inter_cache: Optional[dict]
    e_intra: NDArray
    e_inter: NDArray
    b_ie: dict
    b_ei: dict
    fused: NDArray
    h_deriv: NDArray
    hidden: NDArray
    extras: dict = field(default_factory=dict)


def _forward(
    x: FloatVideo,
    params: TinyNetParams,
    defense: DefenseConfig,
    rng: np.random.Generator,
    region_mask: Optional[NDArray] = None,
) -> Tuple[float, _ForwardCache]:
    if x.ndim != 4 or x.shape[-1] != 3:
        raise ModelError(f"输入视频形状必须为 (T, H, W, 3), 实际为 {x.shape}")
    if region_mask is not None and region_mask.shape != x.shape[:3]:
        raise ModelError(f"区域掩码形状 {region_mask.shape} 与视频 {x.shape[:3]} 不匹配")

    T = x.shape[0]
    s_intra, s_inter = draw_start_frames(
        T, defense.skip_interval, defense.frames, rng, defense.random_start
    )
    intra_input = intra_branch_input(x, defense, s_intra, rng, region_mask)
    e_intra, intra_cache = _intra_encode(intra_input.frames, params)

    if defense.inter_branch:
        inter_input = inter_branch_input(x, defense, s_inter, rng, region_mask)
        e_inter, inter_cache = _inter_encode(inter_input.frames, params, defense.segments)
    else:
        inter_input, inter_cache = None, None
        e_inter = np.zeros((1, D_INTER))

    e_intra_row = e_intra[None, :]
    from_inter, b_ie = _bottleneck(e_inter, params, "b_inter2intra")
    from_intra, b_ei = _bottleneck(e_intra_row, params, "b_intra2inter")
    fused_intra = e_intra_row + from_inter  # (K, D_intra)
    fused_inter = e_inter + from_intra  # (K, D_inter)
    fused = np.concatenate([fused_intra, fused_inter], axis=1)

    h_pre = fused @ params["head.0.w"].T + params["head.0.b"]
    hidden, h_deriv = _gelu(h_pre)
    segment_scores = hidden @ params["head.1.w"][0] + params["head.1.b"][0]
    score = float(segment_scores.mean())

    cache = _ForwardCache(
        x_shape=x.shape,
        intra_input=intra_input,
        inter_input=inter_input,
        intra_cache=intra_cache,
        inter_cache=inter_cache,
        e_intra=e_intra,
        e_inter=e_inter,
        b_ie=b_ie,
        b_ei=b_ei,
        fused=fused,
        h_deriv=h_deriv,
        hidden=hidden,
        extras={"fused_intra": fused_intra, "fused_inter": fused_inter},
    )
    return score, cache


def _backward(
    cache: _ForwardCache,
    params: TinyNetParams,
    g_score: float = 1.0,
    want_input: bool = True,
    want_params: bool = False,
) -> Tuple[Optional[FloatVideo], Optional[dict]]:
    grads = params.zeros_like() if want_params else None
    K = cache.hidden.shape[0]
    g_seg = np.full(K, g_score / K)

    if grads is not None:
        grads["head.1.w"] += (g_seg @ cache.hidden)[None, :]
        grads["head.1.b"] += g_seg.sum()
    g_pre = np.outer(g_seg, params["head.1.w"][0]) * cache.h_deriv
    if grads is not None:
        grads["head.0.w"] += g_pre.T @ cache.fused
        grads["head.0.b"] += g_pre.sum(axis=0)
    g_fused = g_pre @ params["head.0.w"]
    g_fused_intra, g_fused_inter = g_fused[:, :D_INTRA], g_fused[:, D_INTRA:]

    g_e_intra = g_fused_intra.sum(axis=0)
    g_e_inter = g_fused_inter.copy()
    g_e_inter += _bottleneck_backward(g_fused_intra, cache.b_ie, params, "b_inter2intra", grads)
    g_e_intra += _bottleneck_backward(
        g_fused_inter.sum(axis=0, keepdims=True), cache.b_ei, params, "b_intra2inter", grads
    )[0]

    x_grad = np.zeros(cache.x_shape) if want_input else None
    g_intra_frames = _intra_encode_backward(g_e_intra, cache.intra_cache, params, grads, want_input)
    if want_input:
        cache.intra_input.backward(g_intra_frames, x_grad)
    if cache.inter_input is not None:
        g_inter_frames = _inter_encode_backward(
            g_e_inter, cache.inter_cache, params, grads, want_input
        )
        if want_input:
            cache.inter_input.backward(g_inter_frames, x_grad)
    return x_grad, grads


# ---------------------------------------------------------------------------
# 公开接口
# ---------------------------------------------------------------------------


def tinynet_forward(
    video: VideoLike,
    params: TinyNetParams,
    defense: DefenseConfig,
    rng: np.random.Generator,
    region_mask: Optional[NDArray[np.bool_]] = None,
) -> TinyNetOutput:
    """
    前向计算

    Args:
        video: 输入视频
        params: 网络参数
        defense: 防御配置
        rng: 本次调用的随机数生成器 (起始帧, 网格偏移, 守护图)
        region_mask: 源空间 (T, H, W) 守护图作用区域

    Returns:
        TinyNetOutput: 分数, 融合前的两个分支嵌入 (帧间嵌入取各段均值), 融合后嵌入

    Raises:
        RangeError: 视频帧数不足
        ModelError: 维度错误
    """
    score, cache = _forward(as_float(video), params, defense, rng, region_mask)
    return TinyNetOutput(
        score=score,
        intra=EmbeddingVec(values=cache.e_intra.copy(), branch="intra"),
        inter=EmbeddingVec(values=cache.e_inter.mean(axis=0), branch="inter"),
        fused_intra=cache.extras["fused_intra"],
        fused_inter=cache.extras["fused_inter"],
    )


def tinynet_input_gradient(
    video: VideoLike,
    params: TinyNetParams,
    defense: DefenseConfig,
    rng: np.random.Generator,
    region_mask: Optional[NDArray[np.bool_]] = None,
) -> FloatVideo:
    """
    分数对每个输入像素的梯度 (在本次随机抽取处求导, 未被采样的像素梯度为 0)
    """
    _, cache = _forward(as_float(video), params, defense, rng, region_mask)
    grad, _ = _backward(cache, params, want_input=True)
    return grad


def tinynet_value_and_param_gradient(
    video: VideoLike,
    params: TinyNetParams,
    defense: DefenseConfig,
    rng: np.random.Generator,
) -> Tuple[float, _ForwardCache]:
    """训练用: 返回分数与前向缓存, 参数梯度由 tinynet_param_gradient 计算"""
    return _forward(as_float(video), params, defense, rng)


def tinynet_param_gradient(
    cache: _ForwardCache, params: TinyNetParams, g_score: float
) -> Dict[str, NDArray[np.float64]]:
    _, grads = _backward(cache, params, g_score=g_score, want_input=False, want_params=True)
    return grads


class TinyNetScorer(BaseScorer):
    """双分支小网络评分器; 防御随机性在每次调用时重新抽取"""

    name = "tinynet"
    has_input_gradient = True

    def __init__(
        self,
        params: TinyNetParams,
        defense: DefenseConfig,
        region_mask: Optional[NDArray[np.bool_]] = None,
    ):
        params.validate()
        self.params = params
        self.defense = defense
        self.region_mask = region_mask

    def with_region(self, region_mask: Optional[NDArray[np.bool_]]) -> "TinyNetScorer":
        return TinyNetScorer(self.params, self.defense, region_mask)

    def without_guardian(self) -> "TinyNetScorer":
        return TinyNetScorer(self.params, self.defense.without_guardian(), None)

    def score(self, video: VideoLike, rng: np.random.Generator) -> float:
        x = as_float(video)
        passes = self.defense.stochastic_passes
        total = sum(
            _forward(x, self.params, self.defense, rng, self.region_mask)[0] for _ in range(passes)
        )
        return float(total / passes)

    def value_and_gradient(
        self, video: VideoLike, rng: np.random.Generator
    ) -> Tuple[float, FloatVideo]:
        x = as_float(video)
        passes = self.defense.stochastic_passes
        total, grad = 0.0, np.zeros_like(x)
        for _ in range(passes):
            value, cache = _forward(x, self.params, self.defense, rng, self.region_mask)
            g, _ = _backward(cache, self.params, want_input=True)
            total += value
            grad += g
        logger.trace(f"tinynet 梯度: passes={passes}, |g|∞={np.abs(grad).max() / passes:.3e}")
        return total / passes, grad / passes
