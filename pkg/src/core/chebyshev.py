"""
Chebyshev 谱图卷积
三项递推的前向滤波与对系数、输入信号的精确反向梯度
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.sparse_linalg import SparseMatrix, spmm
from src.shared.exceptions import ConstructionError, ShapeError

DENSE_ORACLE_MAX_N = 64


@dataclass(frozen=True, eq=False)
class ChebFilterBank:
    """系数张量 θ，形状 K × d_in × d_out"""
    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.ndim != 3 or theta.shape[0] < 1:
            raise ShapeError(f"theta 必须为 K×d_in×d_out 且 K ≥ 1，得到形状 {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ConstructionError("Chebyshev 系数必须有限")
        object.__setattr__(self, "theta", theta)

    @property
    def K(self) -> int:
        return self.theta.shape[0]

    @property
    def d_in(self) -> int:
        return self.theta.shape[1]

    @property
    def d_out(self) -> int:
        return self.theta.shape[2]

    @property
    def param_count(self) -> int:
        return self.K * self.d_in * self.d_out

    @classmethod
    def glorot(cls, K: int, d_in: int, d_out: int, rng: np.random.Generator) -> "ChebFilterBank":
        return cls(glorot_uniform(rng, K, d_in, d_out))


@dataclass
class ChebCache:
    """前向缓存：K 个基信号 T_k(L̃)·X，basis[0] 即 X"""
    basis: List[np.ndarray]

    @property
    def K(self) -> int:
        return len(self.basis)

    @property
    def signal_shape(self) -> Tuple[int, ...]:
        return self.basis[0].shape


def glorot_bound(K: int, d_in: int, d_out: int) -> float:
    """均匀初始化半宽 sqrt(6 / (K·(d_in + d_out)))"""
    return math.sqrt(6.0 / (K * (d_in + d_out)))


def glorot_uniform(rng: np.random.Generator, K: int, d_in: int, d_out: int) -> np.ndarray:
    bound = glorot_bound(K, d_in, d_out)
    return rng.uniform(-bound, bound, size=(K, d_in, d_out))


def apply_operator(L: SparseMatrix, X: np.ndarray) -> np.ndarray:
    """L·X，X 可带前导批维 (B, n, d)；每个批元素与单独计算逐位一致"""
    if X.ndim == 2:
        return spmm(L, X)
    if X.ndim != 3:
        raise ShapeError(f"图信号必须为 n×d 或 B×n×d，得到形状 {X.shape}")
    batch, n, d = X.shape
    stacked = X.transpose(1, 0, 2).reshape(n, batch * d)
    return spmm(L, stacked).reshape(n, batch, d).transpose(1, 0, 2)


def _check_signal(L: SparseMatrix, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim not in (2, 3):
        raise ShapeError(f"图信号必须为 n×d 或 B×n×d，得到形状 {X.shape}")
    if L.n_rows != L.n_cols or X.shape[-2] != L.n_rows:
        raise ShapeError(f"信号顶点数 {X.shape[-2]} 与算子 {L.shape} 不匹配")
    return X


def chebyshev_basis(L: SparseMatrix, X: np.ndarray, K: int) -> List[np.ndarray]:
    """T_0 = X，T_1 = L̃X，T_k = 2L̃T_{k-1} − T_{k-2}"""
    if K < 1:
        raise ShapeError(f"K 必须 ≥ 1，得到 {K}")
    X = _check_signal(L, X)
    basis = [X]
    if K > 1:
        basis.append(apply_operator(L, X))
    for _ in range(2, K):
        basis.append(2.0 * apply_operator(L, basis[-1]) - basis[-2])
    return basis


def cheb_mix(basis: Sequence[np.ndarray], theta: np.ndarray) -> np.ndarray:
    """Y = Σ_k T_k·θ_k"""
    if len(basis) != theta.shape[0] or basis[0].shape[-1] != theta.shape[1]:
        raise ShapeError(
            f"基信号 (K={len(basis)}, d_in={basis[0].shape[-1]}) 与系数 {theta.shape} 不匹配"
        )
    Y = basis[0] @ theta[0]
    for k in range(1, len(basis)):
        Y = Y + basis[k] @ theta[k]
    return Y


def cheb_coefficient_grad(basis: Sequence[np.ndarray], dY: np.ndarray) -> np.ndarray:
    """dθ_k = T_kᵀ·dY，对批维求和"""
    d_in = basis[0].shape[-1]
    flat_dY = dY.reshape(-1, dY.shape[-1])
    return np.stack([T.reshape(-1, d_in).T @ flat_dY for T in basis])


def cheb_basis_adjoint(L: SparseMatrix, cotangents: Sequence[np.ndarray]) -> np.ndarray:
    """由各基信号的余切 G_k 反向递推出 dX = Σ_k T_k(L̃)·G_k"""
    adjoints = [np.array(G, dtype=np.float64) for G in cotangents]
    for k in range(len(adjoints) - 1, 1, -1):
        adjoints[k - 1] += 2.0 * apply_operator(L, adjoints[k])
        adjoints[k - 2] -= adjoints[k]
    dX = adjoints[0]
    if len(adjoints) > 1:
        dX = dX + apply_operator(L, adjoints[1])
    return dX


def cheb_forward(L: SparseMatrix,
                 X: np.ndarray,
                 bank: ChebFilterBank) -> Tuple[np.ndarray, ChebCache]:
    """Y = Σ_{k<K} T_k(L̃)·X·θ_k

    Args:
        L: 缩放拉普拉斯 L̃（对称）
        X: n×d_in 信号，或 B×n×d_in
        bank: 滤波器组

    Returns:
        (Y, 缓存)
    """
    X = _check_signal(L, X)
    if X.shape[-1] != bank.d_in:
        raise ShapeError(f"输入通道 {X.shape[-1]} 与滤波器 d_in={bank.d_in} 不匹配")
    basis = chebyshev_basis(L, X, bank.K)
    return cheb_mix(basis, bank.theta), ChebCache(basis)


def cheb_backward(L: SparseMatrix,
                  cache: ChebCache,
                  bank: ChebFilterBank,
                  dY: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """cheb_forward 的伴随

    Returns:
        (dX, dTheta)
    """
    dY = np.asarray(dY, dtype=np.float64)
    if cache.K != bank.K or cache.signal_shape[-1] != bank.d_in:
        raise ShapeError(f"缓存 (K={cache.K}, d_in={cache.signal_shape[-1]}) 与滤波器 {bank.theta.shape} 不匹配")
    if dY.shape != cache.signal_shape[:-1] + (bank.d_out,):
        raise ShapeError(f"dY 形状 {dY.shape} 与缓存 {cache.signal_shape} / d_out={bank.d_out} 不匹配")

    d_theta = cheb_coefficient_grad(cache.basis, dY)
    dX = cheb_basis_adjoint(L, [dY @ bank.theta[k].T for k in range(bank.K)])
    return dX, d_theta


def cheb_forward_dense_oracle(L: Union[np.ndarray, SparseMatrix],
                              X: np.ndarray,
                              bank: ChebFilterBank) -> np.ndarray:
    """稠密多项式求值：先求 T_k(L̃) 矩阵，再逐项相加（仅用于测试规模）"""
    dense = L.to_dense() if isinstance(L, SparseMatrix) else np.asarray(L, dtype=np.float64)
    n = dense.shape[0]
    if n > DENSE_ORACLE_MAX_N:
        raise ShapeError(f"稠密参照仅支持 n ≤ {DENSE_ORACLE_MAX_N}，得到 {n}")
    X = np.asarray(X, dtype=np.float64)

    polynomials: List[np.ndarray] = [np.eye(n)]
    if bank.K > 1:
        polynomials.append(dense)
    for _ in range(2, bank.K):
        polynomials.append(2.0 * dense @ polynomials[-1] - polynomials[-2])

    Y: Optional[np.ndarray] = None
    for T, theta_k in zip(polynomials, bank.theta):
        term = (T @ X) @ theta_k
        Y = term if Y is None else Y + term
    return Y
