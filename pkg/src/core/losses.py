"""
损失函数
二元交叉熵、softmax 交叉熵与困惑度
"""

import math
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import log_softmax

from src.shared.exceptions import DataError, NumericalError

BCE_EPSILON = 1e-12

Weight = Optional[Union[float, np.ndarray]]


def _broadcast_weight(weight: Weight, shape: Tuple[int, ...]) -> np.ndarray:
    if weight is None:
        return np.ones(shape)
    try:
        return np.broadcast_to(np.asarray(weight, dtype=np.float64), shape)
    except ValueError:
        raise DataError(f"损失权重形状 {np.shape(weight)} 无法广播到 {shape}")


def binary_cross_entropy(pred: np.ndarray,
                         target: np.ndarray,
                         weight: Weight = None,
                         eps: float = BCE_EPSILON) -> Tuple[float, np.ndarray]:
    """逐元素平均的二元交叉熵

    预测值截断到 [eps, 1 − eps]；截断生效的位置梯度为零。

    Returns:
        (loss, d_loss/d_pred)
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DataError(f"预测形状 {pred.shape} 与目标形状 {target.shape} 不一致")
    if np.any((target < 0) | (target > 1)) or not np.all(np.isfinite(target)):
        raise DataError("BCE 目标必须位于 [0, 1]")

    w = _broadcast_weight(weight, pred.shape)
    p = np.clip(pred, eps, 1.0 - eps)
    active = (pred >= eps) & (pred <= 1.0 - eps)
    count = pred.size

    elementwise = -(target * np.log(p) + (1.0 - target) * np.log1p(-p))
    loss = float(np.sum(w * elementwise) / count)
    grad = np.where(active, w * (p - target) / (p * (1.0 - p)), 0.0) / count
    return loss, grad


def bce_logit_grad(pred: np.ndarray, target: np.ndarray, weight: Weight = None,
                   eps: float = BCE_EPSILON) -> np.ndarray:
    """sigmoid 之后接 BCE 时对 logit 的梯度 (p − t)·w / N，截断位置为零"""
    w = _broadcast_weight(weight, pred.shape)
    active = (pred >= eps) & (pred <= 1.0 - eps)
    return np.where(active, w * (pred - target), 0.0) / pred.size


def softmax_cross_entropy(logits: np.ndarray,
                          targets: np.ndarray,
                          weight: Weight = None) -> Tuple[float, np.ndarray]:
    """按位置平均的 softmax 交叉熵

    Args:
        logits: (..., V)
        targets: (...) 整数类别

    Returns:
        (loss, d_loss/d_logits)
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets)
    if logits.shape[:-1] != targets.shape:
        raise DataError(f"logits 形状 {logits.shape} 与目标形状 {targets.shape} 不一致")
    if not np.all(np.isfinite(logits)):
        raise NumericalError("logits 中存在非有限值")
    vocab = logits.shape[-1]
    if targets.size and (not np.issubdtype(targets.dtype, np.integer)
                         or targets.min() < 0 or targets.max() >= vocab):
        raise DataError(f"目标类别必须为 [0, {vocab}) 内的整数")

    w = _broadcast_weight(weight, targets.shape)
    log_probs = log_softmax(logits, axis=-1)
    nll = -np.take_along_axis(log_probs, targets[..., None], axis=-1)[..., 0]
    count = targets.size
    loss = float(np.sum(w * nll) / count)

    grad = np.exp(log_probs)
    np.put_along_axis(grad, targets[..., None],
                      np.take_along_axis(grad, targets[..., None], axis=-1) - 1.0, axis=-1)
    grad = grad * w[..., None] / count
    return loss, grad


def perplexity(mean_nll: float) -> float:
    return math.exp(mean_nll)
