"""
有限差分梯度校验
随机小规模实例上比较解析梯度与中心差分
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from src.core.cells import (
    CellKind,
    CellParams,
    CellSpec,
    CellState,
    PeepholeShape,
    cell_backward,
    cell_forward,
    cell_init,
)
from src.core.graph import knn_graph
from src.core.model import ModelSpec, Readout, SequenceBatch, bptt, init_model
from src.core.sparse_linalg import SparseMatrix

FD_STEP = 1e-6
GRADIENT_TOLERANCE = 1e-5


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """‖a − n‖∞ / max(1, ‖a‖∞, ‖n‖∞)"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    scale = max(1.0, float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))))
    return float(np.max(np.abs(analytic - numeric))) / scale


def central_difference(f: Callable[[], float], array: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """对 array 逐元素原地扰动，返回 ∂f/∂array 的中心差分"""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    out = grad.reshape(-1)
    for index in range(flat.size):
        original = flat[index]
        flat[index] = original + step
        plus = f()
        flat[index] = original - step
        minus = f()
        flat[index] = original
        out[index] = (plus - minus) / (2.0 * step)
    return grad


def random_scaled_laplacian(rng: np.random.Generator, n: int) -> SparseMatrix:
    points = rng.standard_normal((n, 2))
    k = int(rng.integers(1, n)) if n > 1 else 1
    return knn_graph(points, k, metric="euclidean").scaled_laplacian


@dataclass
class CellInstance:
    spec: CellSpec
    params: CellParams
    L: SparseMatrix
    x: np.ndarray
    state: CellState
    d_h: np.ndarray
    d_next: CellState


def random_cell_instance(kind: CellKind, rng: np.random.Generator,
                         max_n: int = 6, max_d: int = 3, max_K: int = 3) -> CellInstance:
    """n ≤ 6、d ≤ 3、K ≤ 3 的随机实例；偏置与参数一并随机化"""
    kind = CellKind(kind)
    n = int(rng.integers(2, max_n + 1))
    spec = CellSpec(
        kind=kind,
        n=n,
        d_x=int(rng.integers(1, max_d + 1)),
        d_h=int(rng.integers(1, max_d + 1)),
        K=int(rng.integers(1, max_K + 1)),
        peepholes=bool(rng.integers(0, 2)),
        peephole_shape=PeepholeShape.PER_VERTEX if rng.integers(0, 2) else PeepholeShape.SHARED,
    )
    params = cell_init(spec, int(rng.integers(0, 2 ** 31)))
    params = {name: value + 0.3 * rng.standard_normal(value.shape) for name, value in params.items()}

    shape = (n, spec.d_h)
    has_c = kind.is_lstm
    state = CellState(h=rng.uniform(-1, 1, shape), c=rng.standard_normal(shape) if has_c else None)
    d_next = CellState(h=rng.standard_normal(shape), c=rng.standard_normal(shape) if has_c else None)
    return CellInstance(
        spec=spec,
        params=params,
        L=random_scaled_laplacian(rng, n),
        x=rng.standard_normal((n, spec.d_x)),
        state=state,
        d_h=rng.standard_normal(shape),
        d_next=d_next,
    )


def cell_gradient_errors(instance: CellInstance, corrupt: bool = False) -> Dict[str, float]:
    """单步梯度校验

    标量目标 f = Σ (d_h + d_next.h) ⊙ h_t + Σ d_next.c ⊙ c_t，
    对每个参数张量、输入与上一步状态分别给出相对误差。
    """
    kind = instance.spec.kind
    params = instance.params
    x, state = instance.x, instance.state

    def objective() -> float:
        h, new_state, _ = cell_forward(kind, params, instance.L, x, state)
        value = float(np.sum((instance.d_h + instance.d_next.h) * h))
        if new_state.c is not None:
            value += float(np.sum(instance.d_next.c * new_state.c))
        return value

    _, _, cache = cell_forward(kind, params, instance.L, x, state)
    dx, d_state, grads = cell_backward(kind, params, cache, instance.d_h, instance.d_next)
    if corrupt:
        first = next(iter(grads))
        grads[first] = grads[first] * 1.01 + 1e-3

    errors = {name: relative_error(grads[name], central_difference(objective, params[name]))
              for name in params}
    errors["x"] = relative_error(dx, central_difference(objective, x))
    errors["h_prev"] = relative_error(d_state.h, central_difference(objective, state.h))
    if state.c is not None:
        errors["c_prev"] = relative_error(d_state.c, central_difference(objective, state.c))
    return errors


@dataclass
class ModelInstance:
    spec: ModelSpec
    params: Dict[str, np.ndarray]
    L: SparseMatrix
    batch: SequenceBatch
    keep_prob: float
    dropout_seed: int


def random_model_instance(kind: CellKind, rng: np.random.Generator,
                          n: int = 5, d_h: int = 3, steps: int = 4) -> ModelInstance:
    """端到端 BPTT 实例：帧任务（dense 读出）或词任务（vertex / pooled 读出）随机选择"""
    kind = CellKind(kind)
    readout = [Readout.DENSE, Readout.POOLED, Readout.VERTEX][int(rng.integers(0, 3))]
    batch_size = int(rng.integers(1, 3))
    token_task = readout != Readout.DENSE
    d_x = 1 if token_task else int(rng.integers(1, 3))
    cell = CellSpec(kind=kind, n=n, d_x=d_x, d_h=d_h, K=int(rng.integers(1, 4)),
                    peepholes=bool(rng.integers(0, 2)))
    spec = ModelSpec(cell=cell, layers=int(rng.integers(1, 3)), readout=readout)
    params = init_model(spec, int(rng.integers(0, 2 ** 31)))
    params = {name: value + 0.3 * rng.standard_normal(value.shape) for name, value in params.items()}

    if token_task:
        ids = rng.integers(0, n, size=(steps + 1, batch_size))
        frames = np.zeros((steps + 1, batch_size, n, 1))
        np.put_along_axis(frames, ids[..., None, None], 1.0, axis=-2)
        batch = SequenceBatch(inputs=frames[:-1], targets=ids[1:])
    else:
        frames = rng.uniform(0, 1, size=(steps + 1, batch_size, n, d_x))
        batch = SequenceBatch(inputs=frames[:-1], targets=frames[1:])

    keep_prob = 1.0 if rng.integers(0, 2) else 0.8
    return ModelInstance(spec=spec, params=params, L=random_scaled_laplacian(rng, n), batch=batch,
                         keep_prob=keep_prob, dropout_seed=int(rng.integers(0, 2 ** 31)))


def bptt_gradient_errors(instance: ModelInstance, corrupt: bool = False) -> Dict[str, float]:
    """整段序列的梯度校验；dropout 掩码由固定种子复现"""
    def run():
        rng = np.random.default_rng(instance.dropout_seed)
        return bptt(instance.spec, instance.params, instance.batch, instance.L,
                    keep_prob=instance.keep_prob, rng=rng)

    grads = run().grads
    if corrupt:
        first = next(iter(grads))
        grads[first] = grads[first] * 1.01 + 1e-3
    return {name: relative_error(grads[name], central_difference(lambda: run().loss, instance.params[name]))
            for name in instance.params}


def max_error(errors: Dict[str, float]) -> float:
    return max(errors.values()) if errors else 0.0


def worst_tensor(errors: Dict[str, float]) -> Optional[str]:
    return max(errors, key=errors.get) if errors else None
