"""
反向缩放 dropout（仅作用于非循环连接）
"""

from typing import Optional, Tuple

import numpy as np


def dropout_mask(shape: Tuple[int, ...],
                 keep_prob: float,
                 rng: Optional[np.random.Generator]) -> Optional[np.ndarray]:
    """m / keep_prob，m ~ Bernoulli(keep_prob)；keep_prob = 1 时返回 None 且不消耗随机数"""
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"keep_prob 必须位于 (0, 1]，得到 {keep_prob}")
    if keep_prob == 1.0:
        return None
    if rng is None:
        raise ValueError("keep_prob < 1 时需要随机数生成器")
    return (rng.random(shape) < keep_prob) / keep_prob


def dropout_apply(x: np.ndarray,
                  keep_prob: float,
                  rng: Optional[np.random.Generator] = None,
                  training: bool = True) -> np.ndarray:
    """训练模式下 x·m/keep_prob，评估模式下恒等"""
    if not training:
        return x
    mask = dropout_mask(np.shape(x), keep_prob, rng)
    return x if mask is None else x * mask
