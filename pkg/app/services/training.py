"""
小网络训练

损失为每批 1 − PLCC(预测, MOS), Adam 更新 (β₁=0.9, β₂=0.999, ε=1e-8).
训练结束后用最小二乘重新拟合头部最后一层, 使分数落在 MOS 尺度 (PLCC 不变).
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from loguru import logger
from numpy.typing import NDArray

from app.core.exceptions import DegenerateDatasetError
from app.models.video import LabeledVideo
from app.schemas.defense import DefenseConfig
from app.schemas.train import TrainConfig
from app.services.tinynet import (
    INTER_ENCODER_PARAMS,
    TinyNetParams,
    init_params,
    tinynet_param_gradient,
    tinynet_value_and_param_gradient,
)
from app.utils.rng import substream

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class EpochStats:
    epoch: int
    loss: float
    plcc: float
    skipped_batches: int = 0


@dataclass
class TrainingResult:
    params: TinyNetParams
    history: List[EpochStats] = field(default_factory=list)
    final_plcc: Optional[float] = None


class AdamOptimizer:
    """逐参数自适应矩估计"""

    def __init__(self, params: TinyNetParams, learning_rate: float, frozen: Iterable[str] = ()):
        self.learning_rate = learning_rate
        self.frozen = set(frozen)
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def step(self, params: TinyNetParams, grads: Dict[str, NDArray]):
        self.t += 1
        correction1 = 1.0 - ADAM_BETA1**self.t
        correction2 = 1.0 - ADAM_BETA2**self.t
        for name, grad in grads.items():
            if name in self.frozen:
                continue
            self.m[name] = ADAM_BETA1 * self.m[name] + (1.0 - ADAM_BETA1) * grad
            self.v[name] = ADAM_BETA2 * self.v[name] + (1.0 - ADAM_BETA2) * grad**2
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            params.tensors[name] -= self.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def plcc_and_gradient(predictions: NDArray, targets: NDArray) -> Optional[tuple]:
    """
    PLCC 及其对预测值的梯度

    Returns:
        (r, dr/dp); 任一向量方差为 0 时返回 None
    """
    a = predictions - predictions.mean()
    b = targets - targets.mean()
    norm_a, norm_b = np.linalg.norm(a), np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        return None
    r = float(a @ b / (norm_a * norm_b))
    # a 已中心化, 对 p 的导数里均值项相互抵消
    grad = b / (norm_a * norm_b) - r * a / norm_a**2
    return r, grad


def _check_dataset(dataset: Sequence[LabeledVideo], cfg: TrainConfig):
    if len(dataset) < 2:
        raise DegenerateDatasetError(f"训练集至少需要 2 个视频, 实际 {len(dataset)} 个")
    if len(dataset) < cfg.batch_size:
        raise DegenerateDatasetError(
            f"训练集大小 {len(dataset)} 小于批大小 {cfg.batch_size}"
        )
    mos = np.array([item.mos for item in dataset])
    if np.all(mos == mos[0]):
        raise DegenerateDatasetError(f"所有视频 MOS 相同 ({mos[0]}), PLCC 无定义")


def calibrate_head(
    params: TinyNetParams, predictions: NDArray, targets: NDArray
) -> TinyNetParams:
    """
    闭式拟合 MOS ≈ a·pred + c, 并把 (a, c) 折入头部最后一层

    分数是各段输出的均值, 对最后一层做仿射变换等价于对分数做同一仿射变换.
    """
    if np.ptp(predictions) == 0.0:
        logger.warning("预测值全部相同, 跳过头部校准")
        return params
    design = np.stack([predictions, np.ones_like(predictions)], axis=1)
    (scale, shift), *_ = np.linalg.lstsq(design, targets, rcond=None)
    calibrated = params.copy()
    calibrated.tensors["head.1.w"] = scale * params["head.1.w"]
    calibrated.tensors["head.1.b"] = scale * params["head.1.b"] + shift
    logger.info(f"头部校准: scale={scale:.4f}, shift={shift:.4f}")
    return calibrated


def train_tinynet(
    dataset: Sequence[LabeledVideo],
    cfg: TrainConfig,
    defense: Optional[DefenseConfig] = None,
    initial: Optional[TinyNetParams] = None,
) -> TrainingResult:
    """
    训练双分支小网络

    Args:
        dataset: 带 MOS 的训练视频
        cfg: 训练配置; cfg.seed 为空时按 0 处理 (实验运行器会先派生种子)
        defense: 训练时使用的防御配置; cfg.defense="off" 时关闭全部随机变换
        initial: 初始参数, 为空时按种子初始化

    Returns:
        TrainingResult: 校准后的参数与逐轮统计

    Raises:
        DegenerateDatasetError: MOS 全相同或样本不足
    """
    _check_dataset(dataset, cfg)
    seed = cfg.seed if cfg.seed is not None else 0
    defense = defense or DefenseConfig()
    if cfg.defense == "off":
        defense = defense.without_randomness()

    params = initial.copy() if initial is not None else init_params(substream(seed, "init"))
    frozen = INTER_ENCODER_PARAMS if cfg.freeze_inter_encoder else ()
    optimizer = AdamOptimizer(params, cfg.learning_rate, frozen=frozen)
    shuffle_rng = substream(seed, "shuffle")
    defense_rng = substream(seed, "train_defense")
    targets = np.array([item.mos for item in dataset])

    logger.info(
        f"开始训练: {len(dataset)} 个视频, epochs={cfg.epochs}, batch={cfg.batch_size}, "
        f"lr={cfg.learning_rate}, 防御={defense.label}, 冻结帧间编码器={cfg.freeze_inter_encoder}"
    )
    result = TrainingResult(params=params)
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(dataset))
        epoch_preds = np.zeros(len(dataset))
        losses, skipped = [], 0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            caches, preds = [], np.zeros(len(batch))
            for j, idx in enumerate(batch):
                preds[j], cache = tinynet_value_and_param_gradient(
                    dataset[idx].video, params, defense, defense_rng
                )
                caches.append(cache)
            epoch_preds[batch] = preds

            corr = plcc_and_gradient(preds, targets[batch]) if len(batch) >= 2 else None
            if corr is None:
                skipped += 1
                logger.warning(f"第 {epoch} 轮跳过批次 (大小 {len(batch)}): PLCC 无定义")
                continue
            r, g_preds = corr
            losses.append(1.0 - r)

            grads = params.zeros_like()
            for cache, g_pred in zip(caches, g_preds):
                # 最小化 1 − r, 对预测的梯度为 −dr/dp
                for name, g in tinynet_param_gradient(cache, params, -g_pred).items():
                    grads[name] += g
            optimizer.step(params, grads)

        corr = plcc_and_gradient(epoch_preds, targets)
        stats = EpochStats(
            epoch=epoch,
            loss=float(np.mean(losses)) if losses else float("nan"),
            plcc=corr[0] if corr is not None else float("nan"),
            skipped_batches=skipped,
        )
        result.history.append(stats)
        logger.debug(f"epoch {epoch}: loss={stats.loss:.4f}, plcc={stats.plcc:.4f}")

    eval_rng = substream(seed, "calibrate")
    preds = np.array(
        [tinynet_value_and_param_gradient(item.video, params, defense, eval_rng)[0] for item in dataset]
    )
    result.params = calibrate_head(params, preds, targets)
    corr = plcc_and_gradient(preds, targets)
    result.final_plcc = corr[0] if corr is not None else None
    logger.info(f"训练完成: 训练集 PLCC={result.final_plcc}")
    return result
