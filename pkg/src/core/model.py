"""
模型组合与时间反向传播
单元堆叠（1–2 层）、读出层、教师强制前向与 BPTT、自回归前向
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, softmax

from src.core.cells import (
    CellParams,
    CellSpec,
    CellState,
    cell_backward,
    cell_forward,
    cell_init,
    layer_spec,
    param_count,
    param_shapes,
    zero_state,
)
from src.core.chebyshev import glorot_uniform
from src.core.dropout import dropout_mask
from src.core.losses import Weight, bce_logit_grad, binary_cross_entropy, softmax_cross_entropy
from src.core.sparse_linalg import SparseMatrix
from src.shared.exceptions import CellError, DataError, NumericalError, ShapeError

Params = Dict[str, np.ndarray]

READOUT_PREFIX = "readout."


class Readout(str, Enum):
    """读出层

    dense: K=1 滤波器 d_h → d_x 加 sigmoid（帧预测，BCE）
    pooled: 顶点求和后仿射到 V 个 logit（词预测）
    vertex: 每个顶点一个分数 h_v·w + b_v，要求 n = V
    """
    DENSE = "dense"
    POOLED = "pooled"
    VERTEX = "vertex"


@dataclass(frozen=True)
class ModelSpec:
    cell: CellSpec
    layers: int = 1
    readout: Readout = Readout.DENSE
    vocab: Optional[int] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "readout", Readout(self.readout))
        except ValueError:
            raise CellError(f"未知的读出层: {self.readout}")
        if self.layers not in (1, 2):
            raise CellError(f"layers 必须为 1 或 2，得到 {self.layers}")
        if self.readout != Readout.DENSE:
            vocab = self.cell.n if self.vocab is None else self.vocab
            object.__setattr__(self, "vocab", vocab)
            if vocab < 2:
                raise CellError(f"词表大小必须 ≥ 2，得到 {vocab}")
            if self.cell.n != vocab or self.cell.d_x != 1:
                raise CellError(
                    f"词任务要求 n = V 且 d_x = 1（one-hot 图信号），得到 n={self.cell.n}, V={vocab}, d_x={self.cell.d_x}"
                )

    @property
    def is_token_task(self) -> bool:
        return self.readout != Readout.DENSE

    def layer_specs(self) -> List[CellSpec]:
        return [layer_spec(self.cell, layer) for layer in range(self.layers)]

    def readout_shapes(self) -> List[Tuple[str, Tuple[int, ...]]]:
        d_h = self.cell.d_h
        if self.readout == Readout.DENSE:
            return [("readout.W", (1, d_h, self.cell.d_x)), ("readout.b", (self.cell.d_x,))]
        if self.readout == Readout.POOLED:
            return [("readout.W", (d_h, self.vocab)), ("readout.b", (self.vocab,))]
        return [("readout.W", (d_h, 1)), ("readout.b", (self.vocab,))]

    def param_shapes(self) -> List[Tuple[str, Tuple[int, ...]]]:
        shapes = []
        for layer, spec in enumerate(self.layer_specs()):
            shapes.extend((f"layer{layer}.{name}", shape) for name, shape in param_shapes(spec))
        return shapes + self.readout_shapes()

    def param_count(self) -> int:
        cells = sum(param_count(spec) for spec in self.layer_specs())
        return cells + sum(int(np.prod(shape)) for _, shape in self.readout_shapes())


@dataclass
class SequenceBatch:
    """时间优先的批：inputs T×B×n×d_x；targets 为 T×B×n×d_x 帧或 T×B 词 id"""
    inputs: np.ndarray
    targets: np.ndarray
    graph_id: Optional[str] = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets)
        if self.inputs.ndim != 4:
            raise ShapeError(f"inputs 必须为 T×B×n×d_x，得到形状 {self.inputs.shape}")
        if self.targets.shape[:2] != self.inputs.shape[:2]:
            raise ShapeError(f"targets 形状 {self.targets.shape} 与 inputs {self.inputs.shape} 的 T×B 不一致")
        if not np.all(np.isfinite(self.inputs)):
            raise DataError("输入帧存在非有限值")

    @property
    def steps(self) -> int:
        return self.inputs.shape[0]

    @property
    def size(self) -> int:
        return self.inputs.shape[1]


@dataclass
class BPTTResult:
    loss: float
    grads: Params
    step_losses: List[float] = field(default_factory=list)


def layer_params(params: Params, layer: int) -> CellParams:
    prefix = f"layer{layer}."
    return {name[len(prefix):]: value for name, value in params.items() if name.startswith(prefix)}


def init_model(spec: ModelSpec, seed: int) -> Params:
    """各层单元以 (seed, layer) 播种，读出层以 (seed, layers) 播种"""
    params: Params = {}
    for layer, cell_spec in enumerate(spec.layer_specs()):
        for name, value in cell_init(cell_spec, [seed, layer]).items():
            params[f"layer{layer}.{name}"] = value
    rng = np.random.default_rng([seed, spec.layers])
    for name, shape in spec.readout_shapes():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        elif len(shape) == 3:
            params[name] = glorot_uniform(rng, *shape)
        else:
            params[name] = glorot_uniform(rng, 1, *shape)[0]
    return params


def check_params(spec: ModelSpec, params: Params) -> None:
    """参数名与形状必须与规格完全一致"""
    expected = spec.param_shapes()
    if list(params) != [name for name, _ in expected]:
        missing = [name for name, _ in expected if name not in params]
        extra = [name for name in params if name not in dict(expected)]
        raise ShapeError(f"参数集合与模型规格不一致 (缺少 {missing}, 多余 {extra})")
    for name, shape in expected:
        if params[name].shape != shape:
            raise ShapeError(f"参数 {name} 形状 {params[name].shape} 与规格 {shape} 不一致")


def initial_states(spec: ModelSpec, batch: int) -> List[CellState]:
    return [zero_state(cell_spec, batch) for cell_spec in spec.layer_specs()]


def readout_forward(spec: ModelSpec, params: Params, h: np.ndarray) -> np.ndarray:
    W, b = params["readout.W"], params["readout.b"]
    if spec.readout == Readout.DENSE:
        return h @ W[0] + b
    if spec.readout == Readout.POOLED:
        return h.sum(axis=-2) @ W + b
    return (h @ W)[..., 0] + b


def readout_backward(spec: ModelSpec, params: Params, h: np.ndarray,
                     d_logits: np.ndarray, grads: Params) -> np.ndarray:
    """累加读出层梯度，返回 dh"""
    W = params["readout.W"]
    if spec.readout == Readout.DENSE:
        grads["readout.W"] += (h.reshape(-1, h.shape[-1]).T @ d_logits.reshape(-1, d_logits.shape[-1]))[None]
        grads["readout.b"] += d_logits.reshape(-1, d_logits.shape[-1]).sum(axis=0)
        return d_logits @ W[0].T
    if spec.readout == Readout.POOLED:
        pooled = h.sum(axis=-2)
        grads["readout.W"] += pooled.reshape(-1, pooled.shape[-1]).T @ d_logits.reshape(-1, d_logits.shape[-1])
        grads["readout.b"] += d_logits.reshape(-1, d_logits.shape[-1]).sum(axis=0)
        d_pooled = d_logits @ W.T
        return np.broadcast_to(d_pooled[..., None, :], h.shape).copy()
    grads["readout.W"] += h.reshape(-1, h.shape[-1]).T @ d_logits.reshape(-1, 1)
    grads["readout.b"] += d_logits.reshape(-1, d_logits.shape[-1]).sum(axis=0)
    return d_logits[..., None] * W[:, 0]


def predictions(spec: ModelSpec, logits: np.ndarray) -> np.ndarray:
    """帧任务为 sigmoid 概率，词任务为 softmax 分布"""
    if spec.readout == Readout.DENSE:
        return expit(logits)
    return softmax(logits, axis=-1)


def feed_back(spec: ModelSpec, logits: np.ndarray) -> np.ndarray:
    """自回归输入：帧任务取 sigmoid 输出，词任务取 argmax 的 one-hot 图信号"""
    if spec.readout == Readout.DENSE:
        return expit(logits)
    ids = np.argmax(logits, axis=-1)
    frames = np.zeros(ids.shape + (spec.vocab, 1))
    np.put_along_axis(frames, ids[..., None, None], 1.0, axis=-2)
    return frames


def step_loss(spec: ModelSpec, logits: np.ndarray, target: np.ndarray,
              weight: Weight = None) -> Tuple[float, np.ndarray]:
    """单步平均损失与对 logits 的梯度"""
    if spec.readout == Readout.DENSE:
        pred = expit(logits)
        loss, _ = binary_cross_entropy(pred, target, weight)
        return loss, bce_logit_grad(pred, np.asarray(target, dtype=np.float64), weight)
    return softmax_cross_entropy(logits, target, weight)


def _step_weight(weight: Weight, t: int, steps: int) -> Weight:
    if weight is None or np.ndim(weight) == 0:
        return weight
    weight = np.asarray(weight)
    return weight[t] if weight.shape[0] == steps else weight


@dataclass
class _StepRecord:
    caches: list
    masks: List[Optional[np.ndarray]]
    out_mask: Optional[np.ndarray]
    h_read: np.ndarray
    d_logits: np.ndarray


def _model_step(spec: ModelSpec,
                cells: List[CellParams],
                L: Optional[SparseMatrix],
                x_t: np.ndarray,
                states: List[CellState],
                keep_prob: float,
                rng: Optional[np.random.Generator]):
    caches, masks = [], []
    layer_input = x_t
    for layer in range(spec.layers):
        mask = dropout_mask(layer_input.shape, keep_prob, rng)
        masks.append(mask)
        cell_input = layer_input if mask is None else layer_input * mask
        layer_input, states[layer], cache = cell_forward(spec.cell.kind, cells[layer], L, cell_input, states[layer])
        caches.append(cache)
    out_mask = dropout_mask(layer_input.shape, keep_prob, rng)
    h_read = layer_input if out_mask is None else layer_input * out_mask
    return h_read, caches, masks, out_mask


def bptt(spec: ModelSpec,
         params: Params,
         batch: SequenceBatch,
         L: Optional[SparseMatrix],
         keep_prob: float = 1.0,
         rng: Optional[np.random.Generator] = None,
         weight: Weight = None) -> BPTTResult:
    """教师强制前向 + 反向扫描

    损失为各步平均损失的均值；dropout 只作用于单元输入、层间与读出前。

    Args:
        spec: 模型规格
        params: 模型参数
        batch: 序列批
        L: 缩放拉普拉斯（fclstm 可为 None）
        keep_prob: dropout 保留概率
        rng: dropout 随机数生成器
        weight: 标量或与 targets 同形的损失权重

    Returns:
        BPTTResult(loss, grads, step_losses)
    """
    steps, size = batch.steps, batch.size
    cells = [layer_params(params, layer) for layer in range(spec.layers)]
    states = initial_states(spec, size)
    records: List[_StepRecord] = []
    step_losses: List[float] = []

    for t in range(steps):
        h_read, caches, masks, out_mask = _model_step(spec, cells, L, batch.inputs[t], states, keep_prob, rng)
        logits = readout_forward(spec, params, h_read)
        try:
            loss_t, d_logits = step_loss(spec, logits, batch.targets[t], _step_weight(weight, t, steps))
        except NumericalError as e:
            raise NumericalError(f"第 {t} 步出现非有限值: {e}", step=t)
        if not math.isfinite(loss_t):
            raise NumericalError(f"第 {t} 步损失非有限: {loss_t}", step=t)
        step_losses.append(loss_t)
        records.append(_StepRecord(caches, masks, out_mask, h_read, d_logits))

    grads: Params = {name: np.zeros_like(value) for name, value in params.items()}
    cell_grads = [{name[len(f"layer{layer}."):]: grads[name] for name in grads if name.startswith(f"layer{layer}.")}
                  for layer in range(spec.layers)]
    d_next: List[Optional[CellState]] = [None] * spec.layers

    for t in reversed(range(steps)):
        record = records[t]
        d_h = readout_backward(spec, params, record.h_read, record.d_logits / steps, grads)
        if record.out_mask is not None:
            d_h = d_h * record.out_mask
        for layer in reversed(range(spec.layers)):
            d_x, d_next[layer], _ = cell_backward(
                spec.cell.kind, cells[layer], record.caches[layer], d_h, d_next[layer], cell_grads[layer]
            )
            mask = record.masks[layer]
            d_h = d_x if mask is None else d_x * mask

    for name, value in grads.items():
        if not np.all(np.isfinite(value)):
            raise NumericalError(f"参数 {name} 的梯度存在非有限值")
    return BPTTResult(loss=math.fsum(step_losses) / steps, grads=grads, step_losses=step_losses)


def forward_losses(spec: ModelSpec,
                   params: Params,
                   batch: SequenceBatch,
                   L: Optional[SparseMatrix],
                   rollout: int = 0) -> List[float]:
    """评估前向（无 dropout）

    rollout = k > 0 时，最后 k 步中除第一步外的输入替换为上一步预测的回馈；
    rollout = 1 与教师强制结果相同。返回每一步的平均损失。
    """
    steps = batch.steps
    if not 0 <= rollout <= steps:
        raise DataError(f"rollout 必须位于 [0, {steps}]，得到 {rollout}")
    cells = [layer_params(params, layer) for layer in range(spec.layers)]
    states = initial_states(spec, batch.size)
    losses: List[float] = []
    logits = None
    first_free = steps - rollout + 1

    for t in range(steps):
        x_t = batch.inputs[t]
        if rollout and t >= first_free:
            x_t = feed_back(spec, logits)
        h, _, _, _ = _model_step(spec, cells, L, x_t, states, 1.0, None)
        logits = readout_forward(spec, params, h)
        try:
            loss_t, _ = step_loss(spec, logits, batch.targets[t])
        except NumericalError as e:
            raise NumericalError(f"第 {t} 步出现非有限值: {e}", step=t)
        if not math.isfinite(loss_t):
            raise NumericalError(f"第 {t} 步损失非有限: {loss_t}", step=t)
        losses.append(loss_t)
    return losses
