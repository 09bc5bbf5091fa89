"""
防御变换服务

三条防御原则都实现为纯函数, 随机性只来自显式传入的 numpy Generator:
    - 时间采样: 帧内分支跳帧采样, 帧间分支连续采样
    - 空间网格采样: G×G 网格各取一个 S×S 补丁, 拼接为 (G·S)×(G·S) 碎片, 各帧偏移对齐
    - 像素级随机化: 逐元素加 ±1 守护图后截断到 [0, 255]
以及帧间分支使用的双线性缩放 (半像素中心, 边缘截断).

除守护图加法和缩放外, 所有变换只复制像素, 反向传播时按索引散射梯度.
"""

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from app.core.exceptions import GridError, RangeError
from app.models.transforms import GridParams, GuardianMap, SamplingParams
from app.models.video import FloatVideo, Video
from app.schemas.defense import DefenseConfig

FramesLike = Union[Video, NDArray]


def _frames(v: FramesLike) -> NDArray:
    return v.pixels if isinstance(v, Video) else np.asarray(v)


def _rewrap(src: FramesLike, frames: NDArray) -> FramesLike:
    """保持输入类型: Video 进则 Video 出"""
    if isinstance(src, Video):
        return Video(pixels=np.ascontiguousarray(frames))
    return frames


# ---------------------------------------------------------------------------
# 时间采样
# ---------------------------------------------------------------------------


def skip_indices(T: int, p: SamplingParams) -> NDArray[np.int64]:
    """跳帧采样的帧索引: s, s+n, …, s+n·(d−1) (区间右端开)"""
    last = p.s + p.n * (p.d - 1)
    if last >= T:
        raise RangeError(required=last + 1, available=T)
    return p.s + p.n * np.arange(p.d, dtype=np.int64)


def skip_sample(v: FramesLike, p: SamplingParams) -> FramesLike:
    """
    跳帧采样 (帧内分支)

    Args:
        v: 源视频
        p: 采样参数

    Returns:
        d 帧, 与源帧逐像素相同

    Raises:
        RangeError: 帧数不足
    """
    frames = _frames(v)
    return _rewrap(v, frames[skip_indices(frames.shape[0], p)])


def continuous_indices(T: int, s: int, d: int) -> NDArray[np.int64]:
    """连续采样的帧索引: s … s+d−1"""
    if s < 0 or d < 1:
        raise ValueError(f"连续采样参数非法: s={s}, d={d}")
    if s + d > T:
        raise RangeError(required=s + d, available=T)
    return np.arange(s, s + d, dtype=np.int64)


def continuous_sample(v: FramesLike, s: int, d: int) -> FramesLike:
    """
    连续采样 (帧间分支)

    Raises:
        RangeError: s + d > T
    """
    frames = _frames(v)
    return _rewrap(v, frames[continuous_indices(frames.shape[0], s, d)])


def draw_start_frames(
    T: int, n: int, d: int, rng: np.random.Generator, random_start: bool = True
) -> Tuple[int, int]:
    """
    抽取两个分支的起始帧

    帧间起点在可行范围内均匀抽取; 帧内起点在剩余可行值中均匀抽取 (与帧间不同),
    仅当帧内只有唯一可行值且恰好相同时才允许相等.
    random_start 关闭时固定为 (0, (T−d)//2).

    Returns:
        Tuple[int, int]: (s_intra, s_inter)
    """
    max_intra = T - 1 - n * (d - 1)
    if max_intra < 0:
        raise RangeError(required=n * (d - 1) + 1, available=T)
    max_inter = T - d
    if max_inter < 0:
        raise RangeError(required=d, available=T)

    if not random_start:
        return 0, max_inter // 2

    s_inter = int(rng.integers(0, max_inter + 1))
    candidates = [s for s in range(max_intra + 1) if s != s_inter]
    if not candidates:
        candidates = list(range(max_intra + 1))
    s_intra = candidates[int(rng.integers(len(candidates)))]
    return s_intra, s_inter


# ---------------------------------------------------------------------------
# 空间网格采样
# ---------------------------------------------------------------------------


def _check_grid_geometry(H: int, W: int, G: int, S: int):
    if G < 1 or S < 1:
        raise GridError(f"G 和 S 必须 ≥ 1, 实际为 G={G}, S={S}")
    if H % G != 0 or W % G != 0:
        raise GridError(f"帧尺寸 {H}×{W} 不能被 G={G} 整除")
    if S > H // G or S > W // G:
        raise GridError(f"补丁边长 S={S} 超过网格尺寸 {H // G}×{W // G}")


def center_crop_to_multiple(frames: NDArray, G: int) -> Tuple[NDArray, int, int]:
    """
    中心裁剪到能被 G 整除的最大尺寸

    Returns:
        Tuple: (裁剪后的帧, top, left)
    """
    H, W = frames.shape[1], frames.shape[2]
    new_h, new_w = (H // G) * G, (W // G) * G
    if new_h < 1 or new_w < 1:
        raise GridError(f"帧尺寸 {H}×{W} 小于网格数 G={G}")
    top, left = (H - new_h) // 2, (W - new_w) // 2
    return frames[:, top : top + new_h, left : left + new_w], top, left


def sample_grid_offsets(H: int, W: int, G: int, S: int, rng: np.random.Generator) -> GridParams:
    """
    为每个网格独立均匀抽取补丁起点

    Args:
        H: 帧高
        W: 帧宽
        G: 每边网格数
        S: 补丁边长
        rng: 随机数生成器

    Returns:
        GridParams: offsets[i, j] ∈ {0..H/G−S}×{0..W/G−S}

    Raises:
        GridError: 尺寸约束不满足
    """
    _check_grid_geometry(H, W, G, S)
    h = rng.integers(0, H // G - S + 1, size=(G, G))
    w = rng.integers(0, W // G - S + 1, size=(G, G))
    return GridParams(G=G, S=S, offsets=np.stack([h, w], axis=-1).astype(np.int64))


def fragment_indices(H: int, W: int, gp: GridParams) -> Tuple[NDArray[np.int64], NDArray[np.int64]]:
    """
    碎片化的索引映射: 输出像素 (r, c) 取自源像素 (rows[r, c], cols[r, c])

    Raises:
        GridError: 网格参数与帧尺寸不匹配
    """
    G, S = gp.G, gp.S
    _check_grid_geometry(H, W, G, S)
    cell_h, cell_w = H // G, W // G
    off_h, off_w = gp.offsets[..., 0], gp.offsets[..., 1]
    if off_h.min() < 0 or off_w.min() < 0 or off_h.max() > cell_h - S or off_w.max() > cell_w - S:
        raise GridError("补丁偏移超出网格范围")

    cell = np.arange(G * S) // S  # 输出位置所在的网格序号
    inner = np.arange(G * S) % S  # 网格内的相对位置
    ci, cj = cell[:, None], cell[None, :]
    rows = ci * cell_h + off_h[ci, cj] + inner[:, None]
    cols = cj * cell_w + off_w[ci, cj] + inner[None, :]
    return rows, cols


def grid_fragment(frames: FramesLike, gp: GridParams) -> FramesLike:
    """
    空间网格碎片化

    输出单元 (i, j) 是从源网格 (i, j) 按 offsets[i][j] 切出的 S×S 补丁,
    所有帧使用同一组偏移.

    Args:
        frames: 形状 (T, H, W, C) 的帧序列或 Video
        gp: 网格参数

    Returns:
        形状 (T, G·S, G·S, C)
    """
    array = _frames(frames)
    rows, cols = fragment_indices(array.shape[1], array.shape[2], gp)
    return _rewrap(frames, array[:, rows, cols, :])


# ---------------------------------------------------------------------------
# 像素级随机化
# ---------------------------------------------------------------------------


def gen_guardian_map(
    H: int, W: int, rng: np.random.Generator, frames: Optional[int] = None
) -> GuardianMap:
    """
    生成守护图, 每个元素独立等概率取 −1 或 +1

    Args:
        H: 帧高
        W: 帧宽
        rng: 随机数生成器
        frames: 给定时生成逐帧独立的 (T, H, W, 3) 守护图

    Returns:
        GuardianMap: 不带区域掩码
    """
    shape = (H, W, 3) if frames is None else (frames, H, W, 3)
    values = rng.integers(0, 2, size=shape, dtype=np.int8) * 2 - 1
    return GuardianMap(values=values.astype(np.int8))


def _guardian_parts(fv: NDArray, gm: GuardianMap) -> Tuple[NDArray, NDArray]:
    """返回 (加性扰动, 作用位置掩码), 均可与 fv 广播"""
    if fv.ndim != 4 or fv.shape[1:] != gm.frame_shape:
        raise GridError(f"守护图形状 {gm.frame_shape} 与帧形状 {fv.shape[1:]} 不匹配")
    if gm.per_frame and gm.values.shape[0] != fv.shape[0]:
        raise GridError(f"逐帧守护图有 {gm.values.shape[0]} 帧, 视频有 {fv.shape[0]} 帧")

    values = gm.values.astype(np.float64)
    if gm.region_mask is None:
        return values, np.ones((1, 1, 1, 1), dtype=bool)

    mask = np.asarray(gm.region_mask, dtype=bool)
    if mask.shape[-2:] != fv.shape[1:3] or mask.ndim not in (2, 3):
        raise GridError(f"区域掩码形状 {mask.shape} 与帧形状 {fv.shape[1:3]} 不匹配")
    if mask.ndim == 3 and mask.shape[0] != fv.shape[0]:
        raise GridError(f"逐帧区域掩码有 {mask.shape[0]} 帧, 视频有 {fv.shape[0]} 帧")
    mask = mask[..., None] if mask.ndim == 3 else mask[None, ..., None]
    return values * mask, mask


def apply_guardian_map(fv: FloatVideo, gm: GuardianMap) -> FloatVideo:
    """
    逐元素加守护图, 被修改的像素截断到 [0, 255], 掩码外的像素保持不变

    Raises:
        GridError: 形状不匹配
    """
    fv = np.asarray(fv, dtype=np.float64)
    delta, touched = _guardian_parts(fv, gm)
    return np.where(touched, np.clip(fv + delta, 0.0, 255.0), fv)


def guardian_jacobian_mask(fv: FloatVideo, gm: GuardianMap) -> NDArray[np.float64]:
    """
    守护图加法的雅可比对角: 截断生效处为 0, 其余为 1

    Returns:
        与 fv 同形状的 0/1 数组
    """
    fv = np.asarray(fv, dtype=np.float64)
    delta, touched = _guardian_parts(fv, gm)
    pre = fv + delta
    passthrough = (pre >= 0.0) & (pre <= 255.0)
    return np.where(touched, passthrough, True).astype(np.float64)


# ---------------------------------------------------------------------------
# 双线性缩放
# ---------------------------------------------------------------------------


def bilinear_matrix(in_size: int, out_size: int) -> NDArray[np.float64]:
    """
    一维双线性插值算子 A (out_size × in_size)

    源坐标 = (dst + 0.5)·scale − 0.5, 截断到 [0, in_size − 1]; 每行权重和为 1.
    """
    if in_size < 1 or out_size < 1:
        raise ValueError(f"缩放尺寸必须 ≥ 1, 实际为 {in_size} -> {out_size}")
    scale = in_size / out_size
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = src - lo

    matrix = np.zeros((out_size, in_size), dtype=np.float64)
    rows = np.arange(out_size)
    np.add.at(matrix, (rows, lo), 1.0 - frac)
    np.add.at(matrix, (rows, hi), frac)
    return matrix


def resize_bilinear(frame: NDArray, out_h: int, out_w: int) -> NDArray[np.float64]:
    """
    双线性缩放, 逐通道进行, 结果保持浮点

    Args:
        frame: (H, W, C) 单帧或 (T, H, W, C) 帧序列
        out_h: 目标高
        out_w: 目标宽

    Returns:
        (out_h, out_w, C) 或 (T, out_h, out_w, C)
    """
    array = np.asarray(frame, dtype=np.float64)
    a_h = bilinear_matrix(array.shape[-3], out_h)
    a_w = bilinear_matrix(array.shape[-2], out_w)
    return np.einsum("oh,...hwc,pw->...opc", a_h, array, a_w, optimize=True)


# ---------------------------------------------------------------------------
# 分支输入: 把防御变换组合成一条流水线, 并记录反向所需的信息
# ---------------------------------------------------------------------------


@dataclass
class BranchInput:
    """记录分支输入如何由源视频得到, 用于把梯度送回源像素"""

    frames: NDArray[np.float64]
    frame_idx: NDArray[np.int64]
    source_hw: Tuple[int, int]
    region: Optional[NDArray[np.bool_]] = None  # 分支坐标下的守护图作用区域
    crop: Optional[Tuple[int, int, int, int]] = None  # top, left, h, w
    frag: Optional[Tuple[NDArray, NDArray]] = None
    resize: Optional[Tuple[NDArray, NDArray]] = None
    guard_jac: Optional[NDArray] = None

    def backward(self, grad: NDArray, out: NDArray):
        """把分支输入上的梯度累加到源视频梯度 out"""
        if self.guard_jac is not None:
            grad = grad * self.guard_jac
        H, W = self.source_hw
        if self.frag is not None:
            top, left, ch, cw = self.crop
            rows, cols = self.frag
            cropped = np.zeros((grad.shape[0], ch, cw, grad.shape[-1]))
            cropped[:, rows, cols, :] = grad
            frames_grad = np.zeros((grad.shape[0], H, W, grad.shape[-1]))
            frames_grad[:, top : top + ch, left : left + cw, :] = cropped
        elif self.resize is not None:
            a_h, a_w = self.resize
            frames_grad = np.einsum("oh,topc,pw->thwc", a_h, grad, a_w, optimize=True)
        else:
            frames_grad = grad
        out[self.frame_idx] += frames_grad


def resize_mask(mask: NDArray, a_h: NDArray, a_w: NDArray) -> NDArray[np.bool_]:
    """把布尔掩码按同一双线性矩阵缩放, 权重 ≥ 0.5 的位置视为在区域内"""
    return np.einsum("oh,thw,pw->top", a_h, mask.astype(np.float64), a_w, optimize=True) >= 0.5


def guard_branch(branch: BranchInput, per_frame: bool, rng: np.random.Generator):
    """在分支输入上加一张新抽取的守护图 (限定在 branch.region 内)"""
    d, h, w = branch.frames.shape[:3]
    gm = gen_guardian_map(h, w, rng, frames=d if per_frame else None)
    if branch.region is not None:
        gm = GuardianMap(values=gm.values, region_mask=branch.region)
    branch.guard_jac = guardian_jacobian_mask(branch.frames, gm)
    branch.frames = apply_guardian_map(branch.frames, gm)


def source_branch_input(x: FloatVideo, region_mask: Optional[NDArray] = None) -> BranchInput:
    """不做采样与缩放的整段视频"""
    T, H, W = x.shape[:3]
    return BranchInput(
        frames=x.copy(), frame_idx=np.arange(T), source_hw=(H, W), region=region_mask
    )


def intra_branch_input(
    x: FloatVideo,
    defense: DefenseConfig,
    s_intra: int,
    rng: np.random.Generator,
    region_mask: Optional[NDArray] = None,
) -> BranchInput:
    """
    帧内分支输入: 跳帧采样 → 网格碎片化 (关闭时缩放到 G·S) → 守护图

    Args:
        x: 源视频 (T, H, W, 3) 浮点
        defense: 防御配置
        s_intra: 帧内起始帧
        rng: 网格偏移与守护图的随机源
        region_mask: 源坐标下的守护图作用区域, None 表示全部像素

    Returns:
        BranchInput
    """
    T, H, W = x.shape[:3]
    idx = skip_indices(T, SamplingParams(s=s_intra, n=defense.skip_interval, d=defense.frames))
    frames = x[idx]
    region = region_mask[idx] if region_mask is not None else None
    G, S = defense.grid_count, defense.patch_size
    branch = BranchInput(frames=frames, frame_idx=idx, source_hw=(H, W))

    if defense.grid_sampling:
        cropped, top, left = center_crop_to_multiple(frames, G)
        ch, cw = cropped.shape[1], cropped.shape[2]
        gp = sample_grid_offsets(ch, cw, G, S, rng)
        rows, cols = fragment_indices(ch, cw, gp)
        branch.frames = cropped[:, rows, cols, :]
        branch.crop = (top, left, ch, cw)
        branch.frag = (rows, cols)
        if region is not None:
            region = region[:, top : top + ch, left : left + cw][:, rows, cols]
    else:
        a_h, a_w = bilinear_matrix(H, G * S), bilinear_matrix(W, G * S)
        branch.frames = np.einsum("oh,thwc,pw->topc", a_h, frames, a_w, optimize=True)
        branch.resize = (a_h, a_w)
        if region is not None:
            region = resize_mask(region, a_h, a_w)

    branch.region = region
    if defense.intra_guardian:
        guard_branch(branch, defense.per_frame_guardian, rng)
    return branch


def inter_branch_input(
    x: FloatVideo,
    defense: DefenseConfig,
    s_inter: int,
    rng: np.random.Generator,
    region_mask: Optional[NDArray] = None,
) -> BranchInput:
    """帧间分支输入: 连续采样 → 双线性缩放 → 守护图"""
    T, H, W = x.shape[:3]
    idx = continuous_indices(T, s_inter, defense.frames)
    a_h = bilinear_matrix(H, defense.resize_height)
    a_w = bilinear_matrix(W, defense.resize_width)
    branch = BranchInput(
        frames=np.einsum("oh,thwc,pw->topc", a_h, x[idx], a_w, optimize=True),
        frame_idx=idx,
        source_hw=(H, W),
        resize=(a_h, a_w),
        region=resize_mask(region_mask[idx], a_h, a_w) if region_mask is not None else None,
    )
    if defense.inter_guardian:
        guard_branch(branch, defense.per_frame_guardian, rng)
    return branch
