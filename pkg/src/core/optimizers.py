"""
优化器
RMSProp 与全局范数裁剪 SGD，均为纯状态转移
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Tuple

import numpy as np

Params = Dict[str, np.ndarray]


class OptimizerKind(str, Enum):
    RMSPROP = "rmsprop"
    CLIPPED_SGD = "clipped_sgd"


@dataclass(frozen=True)
class OptimizerConfig:
    """优化器超参数"""
    kind: OptimizerKind = OptimizerKind.RMSPROP
    learning_rate: float = 1e-3
    decay_rate: float = 0.9
    epsilon: float = 1e-8
    max_grad_norm: float = 5.0
    lr_decay: float = 0.5
    lr_decay_start: int = 4

    def __post_init__(self):
        object.__setattr__(self, "kind", OptimizerKind(self.kind))


@dataclass
class OptimizerState:
    """优化器状态；RMSProp 的二阶矩累加器与参数形状一致"""
    config: OptimizerConfig
    accumulators: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def init_optimizer_state(config: OptimizerConfig, params: Params) -> OptimizerState:
    accumulators = {}
    if config.kind == OptimizerKind.RMSPROP:
        accumulators = {name: np.zeros_like(value) for name, value in params.items()}
    return OptimizerState(config=config, accumulators=accumulators)


def _check_aligned(params: Params, grads: Params) -> None:
    if list(params) != list(grads):
        raise ValueError("梯度名称与参数不一致")
    for name, value in params.items():
        if grads[name].shape != value.shape:
            raise ValueError(f"梯度 {name} 形状 {grads[name].shape} 与参数 {value.shape} 不一致")


def rmsprop_update(params: Params, grads: Params, state: OptimizerState) -> Tuple[Params, OptimizerState]:
    """acc ← ρ·acc + (1 − ρ)·g²；p ← p − lr·g / sqrt(acc + ε)"""
    _check_aligned(params, grads)
    config = state.config
    new_params: Params = {}
    new_acc: Dict[str, np.ndarray] = {}
    for name, value in params.items():
        g = grads[name]
        acc = config.decay_rate * state.accumulators[name] + (1.0 - config.decay_rate) * g * g
        new_acc[name] = acc
        new_params[name] = value - config.learning_rate * g / np.sqrt(acc + config.epsilon)
    return new_params, replace(state, accumulators=new_acc, step=state.step + 1)


def global_norm(grads: Params) -> float:
    """所有梯度拼接后的 2-范数，按名称顺序累加"""
    return math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))


def clip_by_global_norm(grads: Params, max_norm: float) -> Tuple[Params, float]:
    norm = global_norm(grads)
    if norm <= max_norm:
        return dict(grads), norm
    scale = max_norm / norm
    return {name: g * scale for name, g in grads.items()}, norm


def learning_rate_at(config: OptimizerConfig, epoch: int) -> float:
    """lr · decay^max(0, epoch − start)"""
    return config.learning_rate * config.lr_decay ** max(0, epoch - config.lr_decay_start)


def clipped_sgd_update(params: Params,
                       grads: Params,
                       state: OptimizerState,
                       epoch: int) -> Tuple[Params, OptimizerState]:
    if epoch < 0:
        raise ValueError(f"epoch 必须 ≥ 0，得到 {epoch}")
    _check_aligned(params, grads)
    clipped, _ = clip_by_global_norm(grads, state.config.max_grad_norm)
    lr = learning_rate_at(state.config, epoch)
    new_params = {name: value - lr * clipped[name] for name, value in params.items()}
    return new_params, replace(state, step=state.step + 1)


def optimizer_update(params: Params,
                     grads: Params,
                     state: OptimizerState,
                     epoch: int) -> Tuple[Params, OptimizerState]:
    if state.config.kind == OptimizerKind.RMSPROP:
        return rmsprop_update(params, grads, state)
    return clipped_sgd_update(params, grads, state, epoch)
