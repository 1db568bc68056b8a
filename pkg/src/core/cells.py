"""
循环单元
FC-LSTM、GCRN Model 1、图卷积 LSTM（Model 2）、图 RNN 与图 GRU 的单步前向和精确单步反向
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from src.core.chebyshev import (
    cheb_basis_adjoint,
    cheb_coefficient_grad,
    cheb_mix,
    chebyshev_basis,
    glorot_uniform,
)
from src.core.sparse_linalg import SparseMatrix
from src.shared.exceptions import CellError, ShapeError

CellParams = Dict[str, np.ndarray]
Seed = Union[int, Sequence[int]]

LSTM_GATES = ("i", "f", "c", "o")
GRU_GATES = ("z", "r", "h")
PEEPHOLES = ("w_ci", "w_cf", "w_co")


class CellKind(str, Enum):
    """单元类型"""
    FCLSTM = "fclstm"
    GCRN_M1 = "gcrn_m1"
    GCLSTM_M2 = "gclstm_m2"
    GCRNN = "gcrnn"
    GCGRU = "gcgru"

    @property
    def is_lstm(self) -> bool:
        return self in (CellKind.FCLSTM, CellKind.GCRN_M1, CellKind.GCLSTM_M2)

    @property
    def uses_graph(self) -> bool:
        return self != CellKind.FCLSTM


class PeepholeShape(str, Enum):
    PER_VERTEX = "per_vertex"
    SHARED = "shared"


@dataclass(frozen=True)
class CellSpec:
    """单元规格"""
    kind: CellKind
    n: int
    d_x: int
    d_h: int
    K: int = 1
    peepholes: bool = True
    peephole_shape: PeepholeShape = PeepholeShape.PER_VERTEX

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", CellKind(self.kind))
            object.__setattr__(self, "peephole_shape", PeepholeShape(self.peephole_shape))
        except ValueError as e:
            raise CellError(f"非法的单元规格: {e}")
        for name in ("n", "d_x", "d_h", "K"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise CellError(f"{name} 必须为 ≥ 1 的整数，得到 {value!r}")

    @property
    def has_peepholes(self) -> bool:
        return self.kind.is_lstm and self.peepholes

    def peephole_dims(self) -> Tuple[int, ...]:
        if self.peephole_shape == PeepholeShape.PER_VERTEX:
            return (self.n, self.d_h)
        return (self.d_h,)


@dataclass
class CellState:
    """隐藏状态 h 与细胞状态 c（非 LSTM 类型无 c）"""
    h: np.ndarray
    c: Optional[np.ndarray] = None


@dataclass
class CellCache:
    kind: CellKind
    L: Optional[SparseMatrix]
    x: np.ndarray
    h_prev: np.ndarray


@dataclass
class LSTMCache(CellCache):
    c_prev: np.ndarray = None
    x_feat: np.ndarray = None
    x_basis: Optional[List[np.ndarray]] = None
    h_basis: Optional[List[np.ndarray]] = None
    i: np.ndarray = None
    f: np.ndarray = None
    g: np.ndarray = None
    o: np.ndarray = None
    c: np.ndarray = None
    tanh_c: np.ndarray = None


@dataclass
class GRUCache(CellCache):
    x_basis: List[np.ndarray] = field(default_factory=list)
    h_basis: List[np.ndarray] = field(default_factory=list)
    rh_basis: List[np.ndarray] = field(default_factory=list)
    z: np.ndarray = None
    r: np.ndarray = None
    h_tilde: np.ndarray = None


@dataclass
class RNNCache(CellCache):
    x_basis: List[np.ndarray] = field(default_factory=list)
    h_basis: List[np.ndarray] = field(default_factory=list)
    h: np.ndarray = None


def param_shapes(spec: CellSpec) -> List[Tuple[str, Tuple[int, ...]]]:
    """参数名与形状，顺序即初始化、优化器与检查点的规范顺序"""
    K, d_x, d_h = spec.K, spec.d_x, spec.d_h
    shapes: List[Tuple[str, Tuple[int, ...]]] = []

    if spec.kind.is_lstm:
        if spec.kind == CellKind.GCRN_M1:
            shapes.append(("W_cnn", (K, d_x, d_x)))
        graph_gates = spec.kind == CellKind.GCLSTM_M2
        for gate in LSTM_GATES:
            shapes.append((f"W_x{gate}", (K, d_x, d_h) if graph_gates else (d_x, d_h)))
        for gate in LSTM_GATES:
            shapes.append((f"W_h{gate}", (K, d_h, d_h) if graph_gates else (d_h, d_h)))
        if spec.has_peepholes:
            for name in PEEPHOLES:
                shapes.append((name, spec.peephole_dims()))
        for gate in LSTM_GATES:
            shapes.append((f"b_{gate}", (d_h,)))
    elif spec.kind == CellKind.GCRNN:
        shapes.extend([("W_x", (K, d_x, d_h)), ("W_h", (K, d_h, d_h)), ("b", (d_h,))])
    else:
        for gate in GRU_GATES:
            shapes.append((f"W_x{gate}", (K, d_x, d_h)))
        for gate in GRU_GATES:
            shapes.append((f"W_h{gate}", (K, d_h, d_h)))
        for gate in GRU_GATES:
            shapes.append((f"b_{gate}", (d_h,)))
    return shapes


def param_count(spec: CellSpec) -> int:
    """参数量闭式公式"""
    K, d_x, d_h = spec.K, spec.d_x, spec.d_h
    peep = 3 * int(np.prod(spec.peephole_dims())) if spec.has_peepholes else 0

    if spec.kind == CellKind.FCLSTM:
        return 4 * d_h * (d_x + d_h) + 4 * d_h + peep
    if spec.kind == CellKind.GCRN_M1:
        return K * d_x * d_x + 4 * d_h * (d_x + d_h) + 4 * d_h + peep
    if spec.kind == CellKind.GCLSTM_M2:
        return 4 * K * d_h * (d_x + d_h) + 4 * d_h + peep
    if spec.kind == CellKind.GCRNN:
        return K * d_h * (d_x + d_h) + d_h
    return 3 * K * d_h * (d_x + d_h) + 3 * d_h


def cell_init(spec: CellSpec, seed: Seed) -> CellParams:
    """按规范顺序初始化参数

    遗忘、输入、输出门偏置为 1，候选偏置与 GRU/RNN 偏置为 0，其余均匀分布。
    """
    rng = np.random.default_rng(seed)
    params: CellParams = {}
    for name, shape in param_shapes(spec):
        if name.startswith("b"):
            value = 1.0 if spec.kind.is_lstm and name in ("b_i", "b_f", "b_o") else 0.0
            params[name] = np.full(shape, value)
        elif name in PEEPHOLES:
            bound = math.sqrt(3.0 / spec.d_h)
            params[name] = rng.uniform(-bound, bound, size=shape)
        elif len(shape) == 3:
            params[name] = glorot_uniform(rng, *shape)
        else:
            params[name] = glorot_uniform(rng, 1, *shape)[0]
    return params


def zero_state(spec: CellSpec, batch: Optional[int] = None) -> CellState:
    shape = (spec.n, spec.d_h) if batch is None else (batch, spec.n, spec.d_h)
    return CellState(h=np.zeros(shape), c=np.zeros(shape) if spec.kind.is_lstm else None)


def zero_grads(params: CellParams) -> CellParams:
    return {name: np.zeros_like(value) for name, value in params.items()}


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def _reduce_to(shape: Tuple[int, ...], arr: np.ndarray) -> np.ndarray:
    """把广播后的梯度沿前导维求和回参数形状"""
    return arr.reshape((-1,) + tuple(shape)).sum(axis=0)


def _flat_matmul_grad(inputs: np.ndarray, d_out: np.ndarray) -> np.ndarray:
    return inputs.reshape(-1, inputs.shape[-1]).T @ d_out.reshape(-1, d_out.shape[-1])


def _check_step(x_t: np.ndarray, h_prev: np.ndarray, d_x: int, d_h: int,
                L: Optional[SparseMatrix]) -> Tuple[np.ndarray, np.ndarray]:
    x_t = np.asarray(x_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if x_t.ndim not in (2, 3) or x_t.shape[-1] != d_x:
        raise ShapeError(f"输入形状 {x_t.shape} 与 d_x={d_x} 不匹配")
    if h_prev.shape != x_t.shape[:-1] + (d_h,):
        raise ShapeError(f"隐藏状态形状 {h_prev.shape} 与输入 {x_t.shape} / d_h={d_h} 不匹配")
    if L is not None and L.shape != (x_t.shape[-2], x_t.shape[-2]):
        raise ShapeError(f"缩放拉普拉斯 {L.shape} 与顶点数 {x_t.shape[-2]} 不匹配")
    return x_t, h_prev


def _require_graph(L: Optional[SparseMatrix], kind: CellKind) -> SparseMatrix:
    if L is None:
        raise CellError(f"{kind.value} 需要缩放拉普拉斯 L̃")
    return L


def _lstm_forward(kind: CellKind,
                  params: CellParams,
                  L: Optional[SparseMatrix],
                  x_t: np.ndarray,
                  state: CellState) -> Tuple[np.ndarray, CellState, LSTMCache]:
    graph_gates = kind == CellKind.GCLSTM_M2
    W_xi = params["W_xi"]
    d_x, d_h = W_xi.shape[-2], W_xi.shape[-1]
    if state.c is None:
        raise CellError(f"{kind.value} 需要细胞状态 c")
    x_t, h_prev = _check_step(x_t, state.h, d_x, d_h, L)
    c_prev = np.asarray(state.c, dtype=np.float64)
    if c_prev.shape != h_prev.shape:
        raise ShapeError(f"细胞状态形状 {c_prev.shape} 与隐藏状态 {h_prev.shape} 不匹配")

    x_basis = h_basis = None
    if kind == CellKind.GCRN_M1:
        W_cnn = params["W_cnn"]
        x_basis = chebyshev_basis(L, x_t, W_cnn.shape[0])
        x_feat = cheb_mix(x_basis, W_cnn)
    else:
        x_feat = x_t

    if graph_gates:
        K = W_xi.shape[0]
        x_basis = chebyshev_basis(L, x_t, K)
        h_basis = chebyshev_basis(L, h_prev, K)

    def project(gate: str) -> np.ndarray:
        if graph_gates:
            return cheb_mix(x_basis, params[f"W_x{gate}"]) + cheb_mix(h_basis, params[f"W_h{gate}"])
        return x_feat @ params[f"W_x{gate}"] + h_prev @ params[f"W_h{gate}"]

    peepholes = "w_ci" in params

    def pre_activation(gate: str, cell: Optional[np.ndarray]) -> np.ndarray:
        pre = project(gate)
        if peepholes and cell is not None:
            pre = pre + params[f"w_c{gate}"] * cell
        return pre + params[f"b_{gate}"]

    i = _sigmoid(pre_activation("i", c_prev))
    f = _sigmoid(pre_activation("f", c_prev))
    g = np.tanh(pre_activation("c", None))
    c = f * c_prev + i * g
    o = _sigmoid(pre_activation("o", c))
    tanh_c = np.tanh(c)
    h = o * tanh_c

    cache = LSTMCache(kind=kind, L=L, x=x_t, h_prev=h_prev, c_prev=c_prev, x_feat=x_feat,
                      x_basis=x_basis, h_basis=h_basis, i=i, f=f, g=g, o=o, c=c, tanh_c=tanh_c)
    return h, CellState(h=h, c=c), cache


def fclstm_step(params: CellParams,
                x_t: np.ndarray,
                state: CellState) -> Tuple[np.ndarray, CellState, LSTMCache]:
    """全连接 LSTM：各顶点共享稠密门映射"""
    return _lstm_forward(CellKind.FCLSTM, params, None, x_t, state)


def gcrn_m1_step(params: CellParams,
                 L: SparseMatrix,
                 x_t: np.ndarray,
                 state: CellState) -> Tuple[np.ndarray, CellState, LSTMCache]:
    """Chebyshev 特征提取 (d_x → d_x) 后接 FC-LSTM"""
    return _lstm_forward(CellKind.GCRN_M1, params, _require_graph(L, CellKind.GCRN_M1), x_t, state)


def gclstm_m2_step(params: CellParams,
                   L: SparseMatrix,
                   x_t: np.ndarray,
                   state: CellState) -> Tuple[np.ndarray, CellState, LSTMCache]:
    """每个输入与循环映射均为 Chebyshev 图卷积的 LSTM"""
    return _lstm_forward(CellKind.GCLSTM_M2, params, _require_graph(L, CellKind.GCLSTM_M2), x_t, state)


def gcrnn_step(params: CellParams,
               L: SparseMatrix,
               x_t: np.ndarray,
               h_prev: np.ndarray) -> Tuple[np.ndarray, RNNCache]:
    """h_t = tanh(W_x ∗ x_t + W_h ∗ h_{t-1} + b)"""
    L = _require_graph(L, CellKind.GCRNN)
    W_x, W_h = params["W_x"], params["W_h"]
    x_t, h_prev = _check_step(x_t, h_prev, W_x.shape[1], W_x.shape[2], L)
    x_basis = chebyshev_basis(L, x_t, W_x.shape[0])
    h_basis = chebyshev_basis(L, h_prev, W_h.shape[0])
    h = np.tanh(cheb_mix(x_basis, W_x) + cheb_mix(h_basis, W_h) + params["b"])
    return h, RNNCache(kind=CellKind.GCRNN, L=L, x=x_t, h_prev=h_prev,
                       x_basis=x_basis, h_basis=h_basis, h=h)


def gcgru_step(params: CellParams,
               L: SparseMatrix,
               x_t: np.ndarray,
               h_prev: np.ndarray) -> Tuple[np.ndarray, GRUCache]:
    """图卷积 GRU

    z, r 为更新门与重置门；h̃ = tanh(W_xh ∗ x + W_hh ∗ (r ⊙ h) + b_h)；
    h_t = z ⊙ h_{t-1} + (1 − z) ⊙ h̃。
    """
    L = _require_graph(L, CellKind.GCGRU)
    W_xz = params["W_xz"]
    K = W_xz.shape[0]
    x_t, h_prev = _check_step(x_t, h_prev, W_xz.shape[1], W_xz.shape[2], L)
    x_basis = chebyshev_basis(L, x_t, K)
    h_basis = chebyshev_basis(L, h_prev, K)

    z = _sigmoid(cheb_mix(x_basis, W_xz) + cheb_mix(h_basis, params["W_hz"]) + params["b_z"])
    r = _sigmoid(cheb_mix(x_basis, params["W_xr"]) + cheb_mix(h_basis, params["W_hr"]) + params["b_r"])
    rh_basis = chebyshev_basis(L, r * h_prev, K)
    h_tilde = np.tanh(cheb_mix(x_basis, params["W_xh"]) + cheb_mix(rh_basis, params["W_hh"]) + params["b_h"])
    h = z * h_prev + (1.0 - z) * h_tilde

    return h, GRUCache(kind=CellKind.GCGRU, L=L, x=x_t, h_prev=h_prev, x_basis=x_basis,
                       h_basis=h_basis, rh_basis=rh_basis, z=z, r=r, h_tilde=h_tilde)


def cell_forward(kind: Union[CellKind, str],
                 params: CellParams,
                 L: Optional[SparseMatrix],
                 x_t: np.ndarray,
                 state: CellState) -> Tuple[np.ndarray, CellState, CellCache]:
    """统一签名的单步前向"""
    kind = CellKind(kind)
    if kind == CellKind.FCLSTM:
        return fclstm_step(params, x_t, state)
    if kind == CellKind.GCRN_M1:
        return gcrn_m1_step(params, L, x_t, state)
    if kind == CellKind.GCLSTM_M2:
        return gclstm_m2_step(params, L, x_t, state)
    if kind == CellKind.GCRNN:
        h, cache = gcrnn_step(params, L, x_t, state.h)
        return h, CellState(h=h), cache
    h, cache = gcgru_step(params, L, x_t, state.h)
    return h, CellState(h=h), cache


def _lstm_backward(params: CellParams,
                   cache: LSTMCache,
                   dh: np.ndarray,
                   dc: np.ndarray,
                   grads: CellParams) -> Tuple[np.ndarray, CellState]:
    kind = cache.kind
    i, f, g, o, c_prev = cache.i, cache.f, cache.g, cache.o, cache.c_prev
    peepholes = "w_ci" in params

    d_o = dh * cache.tanh_c
    dc = dc + dh * o * (1.0 - cache.tanh_c ** 2)
    d_pre = {"o": d_o * o * (1.0 - o)}
    if peepholes:
        dc = dc + d_pre["o"] * params["w_co"]
        grads["w_co"] += _reduce_to(params["w_co"].shape, d_pre["o"] * cache.c)

    d_pre["i"] = dc * g * i * (1.0 - i)
    d_pre["f"] = dc * c_prev * f * (1.0 - f)
    d_pre["c"] = dc * i * (1.0 - g ** 2)
    dc_prev = dc * f
    if peepholes:
        dc_prev = dc_prev + d_pre["i"] * params["w_ci"] + d_pre["f"] * params["w_cf"]
        grads["w_ci"] += _reduce_to(params["w_ci"].shape, d_pre["i"] * c_prev)
        grads["w_cf"] += _reduce_to(params["w_cf"].shape, d_pre["f"] * c_prev)

    d_h = params["b_i"].shape[0]
    for gate in LSTM_GATES:
        grads[f"b_{gate}"] += d_pre[gate].reshape(-1, d_h).sum(axis=0)

    if kind == CellKind.GCLSTM_M2:
        L = cache.L
        K = params["W_xi"].shape[0]
        for gate in LSTM_GATES:
            grads[f"W_x{gate}"] += cheb_coefficient_grad(cache.x_basis, d_pre[gate])
            grads[f"W_h{gate}"] += cheb_coefficient_grad(cache.h_basis, d_pre[gate])
        x_cotangents = [sum(d_pre[gate] @ params[f"W_x{gate}"][k].T for gate in LSTM_GATES) for k in range(K)]
        h_cotangents = [sum(d_pre[gate] @ params[f"W_h{gate}"][k].T for gate in LSTM_GATES) for k in range(K)]
        dx = cheb_basis_adjoint(L, x_cotangents)
        dh_prev = cheb_basis_adjoint(L, h_cotangents)
        return dx, CellState(h=dh_prev, c=dc_prev)

    dx_feat = np.zeros_like(cache.x_feat)
    dh_prev = np.zeros_like(cache.h_prev)
    for gate in LSTM_GATES:
        grads[f"W_x{gate}"] += _flat_matmul_grad(cache.x_feat, d_pre[gate])
        grads[f"W_h{gate}"] += _flat_matmul_grad(cache.h_prev, d_pre[gate])
        dx_feat = dx_feat + d_pre[gate] @ params[f"W_x{gate}"].T
        dh_prev = dh_prev + d_pre[gate] @ params[f"W_h{gate}"].T

    if kind == CellKind.GCRN_M1:
        W_cnn = params["W_cnn"]
        grads["W_cnn"] += cheb_coefficient_grad(cache.x_basis, dx_feat)
        dx = cheb_basis_adjoint(cache.L, [dx_feat @ W_cnn[k].T for k in range(W_cnn.shape[0])])
    else:
        dx = dx_feat
    return dx, CellState(h=dh_prev, c=dc_prev)


def _rnn_backward(params: CellParams, cache: RNNCache, dh: np.ndarray,
                  grads: CellParams) -> Tuple[np.ndarray, CellState]:
    W_x, W_h = params["W_x"], params["W_h"]
    d_pre = dh * (1.0 - cache.h ** 2)
    grads["W_x"] += cheb_coefficient_grad(cache.x_basis, d_pre)
    grads["W_h"] += cheb_coefficient_grad(cache.h_basis, d_pre)
    grads["b"] += d_pre.reshape(-1, d_pre.shape[-1]).sum(axis=0)
    dx = cheb_basis_adjoint(cache.L, [d_pre @ W_x[k].T for k in range(W_x.shape[0])])
    dh_prev = cheb_basis_adjoint(cache.L, [d_pre @ W_h[k].T for k in range(W_h.shape[0])])
    return dx, CellState(h=dh_prev)


def _gru_backward(params: CellParams, cache: GRUCache, dh: np.ndarray,
                  grads: CellParams) -> Tuple[np.ndarray, CellState]:
    L, z, r, h_prev, h_tilde = cache.L, cache.z, cache.r, cache.h_prev, cache.h_tilde
    K = params["W_xz"].shape[0]
    d_h = h_prev.shape[-1]

    d_pre_h = dh * (1.0 - z) * (1.0 - h_tilde ** 2)
    d_pre_z = dh * (h_prev - h_tilde) * z * (1.0 - z)
    dh_prev = dh * z

    grads["W_hh"] += cheb_coefficient_grad(cache.rh_basis, d_pre_h)
    d_rh = cheb_basis_adjoint(L, [d_pre_h @ params["W_hh"][k].T for k in range(K)])
    d_pre_r = d_rh * h_prev * r * (1.0 - r)
    dh_prev = dh_prev + d_rh * r

    d_pre = {"z": d_pre_z, "r": d_pre_r, "h": d_pre_h}
    for gate in GRU_GATES:
        grads[f"W_x{gate}"] += cheb_coefficient_grad(cache.x_basis, d_pre[gate])
        grads[f"b_{gate}"] += d_pre[gate].reshape(-1, d_h).sum(axis=0)
    for gate in ("z", "r"):
        grads[f"W_h{gate}"] += cheb_coefficient_grad(cache.h_basis, d_pre[gate])

    x_cotangents = [sum(d_pre[gate] @ params[f"W_x{gate}"][k].T for gate in GRU_GATES) for k in range(K)]
    h_cotangents = [d_pre_z @ params["W_hz"][k].T + d_pre_r @ params["W_hr"][k].T for k in range(K)]
    dx = cheb_basis_adjoint(L, x_cotangents)
    dh_prev = dh_prev + cheb_basis_adjoint(L, h_cotangents)
    return dx, CellState(h=dh_prev)


_CACHE_TYPES = {
    CellKind.FCLSTM: LSTMCache,
    CellKind.GCRN_M1: LSTMCache,
    CellKind.GCLSTM_M2: LSTMCache,
    CellKind.GCRNN: RNNCache,
    CellKind.GCGRU: GRUCache,
}


def cell_backward(kind: Union[CellKind, str],
                  params: CellParams,
                  cache: CellCache,
                  d_h_t: np.ndarray,
                  d_state_next: Optional[CellState] = None,
                  grads: Optional[CellParams] = None) -> Tuple[np.ndarray, CellState, CellParams]:
    """单步反向

    Args:
        kind: 单元类型，必须与缓存一致
        params: 前向所用参数
        cache: 对应前向步的缓存
        d_h_t: 本步输出 h_t 的余切（来自读出层或上层）
        d_state_next: 来自 t+1 步的状态余切
        grads: 梯度累加器，省略时新建

    Returns:
        (d_x_t, 对上一步状态的余切, 累加后的梯度)
    """
    kind = CellKind(kind)
    if cache.kind != kind or not isinstance(cache, _CACHE_TYPES[kind]):
        raise CellError(f"缓存类型 {cache.kind.value} 与单元类型 {kind.value} 不匹配")
    if grads is None:
        grads = zero_grads(params)

    dh = np.asarray(d_h_t, dtype=np.float64)
    if dh.shape != cache.h_prev.shape:
        raise ShapeError(f"d_h_t 形状 {dh.shape} 与隐藏状态 {cache.h_prev.shape} 不匹配")
    if d_state_next is not None:
        dh = dh + d_state_next.h

    if kind.is_lstm:
        dc = np.zeros_like(dh)
        if d_state_next is not None and d_state_next.c is not None:
            dc = dc + d_state_next.c
        dx, d_state = _lstm_backward(params, cache, dh, dc, grads)
    elif kind == CellKind.GCRNN:
        dx, d_state = _rnn_backward(params, cache, dh, grads)
    else:
        dx, d_state = _gru_backward(params, cache, dh, grads)
    return dx, d_state, grads


def layer_spec(spec: CellSpec, layer: int) -> CellSpec:
    """堆叠单元：第二层以第一层隐藏信号为输入"""
    return spec if layer == 0 else replace(spec, d_x=spec.d_h)
