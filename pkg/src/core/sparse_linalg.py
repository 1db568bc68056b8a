"""
稀疏线性代数
CSR 构造、稀疏×稠密乘积与主特征值估计，所有拉普拉斯运算的基础
"""

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, List, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from src.shared.exceptions import ConstructionError, ConvergenceError, ShapeError, SymmetryError

Triple = Tuple[int, int, float]

SYMMETRY_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """规范形式的 CSR 矩阵（64 位浮点）

    每行列索引严格递增、无重复、无显式零；构造后数组只读。
    """
    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        offsets = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        cols = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        vals = np.ascontiguousarray(self.values, dtype=np.float64)

        if self.n_rows < 0 or self.n_cols < 0:
            raise ConstructionError(f"矩阵维度必须非负: {self.n_rows}×{self.n_cols}")
        if offsets.shape != (self.n_rows + 1,):
            raise ConstructionError("row_offsets 长度必须为 n_rows + 1")
        if offsets[0] != 0 or offsets[-1] != vals.shape[0] or cols.shape != vals.shape:
            raise ConstructionError("row_offsets 与 values 长度不一致")
        if np.any(np.diff(offsets) < 0):
            raise ConstructionError("row_offsets 必须单调不减")
        if not np.all(np.isfinite(vals)):
            raise ConstructionError("存储值必须有限")
        if cols.size and (cols.min() < 0 or cols.max() >= self.n_cols):
            raise ConstructionError("列索引越界")
        for row in range(self.n_rows):
            segment = cols[offsets[row]:offsets[row + 1]]
            if segment.size > 1 and np.any(np.diff(segment) <= 0):
                raise ConstructionError(f"第 {row} 行列索引必须严格递增")

        for array in (offsets, cols, vals):
            array.flags.writeable = False
        object.__setattr__(self, "row_offsets", offsets)
        object.__setattr__(self, "col_indices", cols)
        object.__setattr__(self, "values", vals)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.n_rows, self.n_cols

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    @cached_property
    def _csr(self) -> sp.csr_matrix:
        matrix = sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets),
            shape=(self.n_rows, self.n_cols),
            copy=True,
        )
        matrix.has_sorted_indices = True
        return matrix

    def to_scipy(self) -> sp.csr_matrix:
        """返回 scipy CSR 副本"""
        return self._csr.copy()

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def triples(self) -> List[Triple]:
        """按行优先、列升序列出 (row, col, value)"""
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))
        return [(int(r), int(c), float(v)) for r, c, v in zip(rows, self.col_indices, self.values)]

    def transpose(self) -> "SparseMatrix":
        return from_scipy(self._csr.T)

    def diagonal(self) -> np.ndarray:
        return self._csr.diagonal()

    def is_symmetric(self, tol: float = 0.0) -> bool:
        """逐元素 |S - Sᵀ| ≤ tol"""
        if self.n_rows != self.n_cols:
            return False
        difference = (self._csr - self._csr.T).tocoo()
        if difference.nnz == 0:
            return True
        return bool(np.max(np.abs(difference.data)) <= tol)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def from_scipy(matrix: sp.spmatrix) -> SparseMatrix:
    """由任意 scipy 稀疏矩阵构造规范 CSR"""
    csr = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
    csr.sum_duplicates()
    csr.eliminate_zeros()
    csr.sort_indices()
    return SparseMatrix(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data)


def csr_from_coo(n_rows: int, n_cols: int, triples: Iterable[Sequence[float]]) -> SparseMatrix:
    """由 COO 三元组构造规范 CSR

    重复 (row, col) 求和，显式零（包括求和后为零）被丢弃。
    """
    entries = list(triples)
    if n_rows < 0 or n_cols < 0:
        raise ConstructionError(f"矩阵维度必须非负: {n_rows}×{n_cols}")

    if entries:
        try:
            rows = np.array([entry[0] for entry in entries], dtype=np.int64)
            cols = np.array([entry[1] for entry in entries], dtype=np.int64)
            vals = np.array([entry[2] for entry in entries], dtype=np.float64)
        except (TypeError, ValueError, IndexError) as e:
            raise ConstructionError(f"三元组格式非法: {e}") from e
    else:
        rows = np.zeros(0, dtype=np.int64)
        cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0, dtype=np.float64)

    if rows.size and (rows.min() < 0 or rows.max() >= n_rows):
        raise ConstructionError(f"行索引越界 (n_rows={n_rows})")
    if cols.size and (cols.min() < 0 or cols.max() >= n_cols):
        raise ConstructionError(f"列索引越界 (n_cols={n_cols})")
    if not np.all(np.isfinite(vals)):
        raise ConstructionError("三元组中存在非有限值")

    coo = sp.coo_matrix((vals, (rows, cols)), shape=(n_rows, n_cols))
    return from_scipy(coo)


def identity(n: int) -> SparseMatrix:
    return csr_from_coo(n, n, [(i, i, 1.0) for i in range(n)])


def spmm(S: SparseMatrix, X: np.ndarray) -> np.ndarray:
    """稀疏×稠密乘积 S·X

    每个输出元素按列索引升序累加，结果逐位可复现。
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim not in (1, 2):
        raise ShapeError(f"spmm 只接受向量或矩阵，得到 ndim={X.ndim}")
    if X.shape[0] != S.n_cols:
        raise ShapeError(f"spmm 内维不匹配: {S.shape} · {X.shape}")
    return np.asarray(S._csr @ X)


def _power_iterate(matvec: Callable[[np.ndarray], np.ndarray],
                   n: int,
                   tol: float,
                   max_iter: int,
                   seed: int) -> float:
    """对半正定算子做幂迭代，返回 Rayleigh 商

    停止条件为特征残差 ‖Ax − λx‖ ≤ tol·max(1, λ)。
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)

    estimate = 0.0
    for _ in range(max_iter):
        y = matvec(x)
        estimate = float(x @ y)
        residual = float(np.linalg.norm(y - estimate * x))
        if residual <= tol * max(1.0, abs(estimate)):
            return estimate
        # 残差非零时 y 必不为零
        x = y / np.linalg.norm(y)

    raise ConvergenceError(
        f"幂迭代在 {max_iter} 次内未收敛，最后估计 {estimate:.12g}",
        last_estimate=estimate,
        iterations=max_iter,
    )


def _check_square_symmetric(S: SparseMatrix) -> None:
    if S.n_rows != S.n_cols:
        raise ShapeError(f"需要方阵，得到 {S.shape}")
    if S.n_rows < 1:
        raise ShapeError("矩阵阶数必须 ≥ 1")
    if not S.is_symmetric(SYMMETRY_TOLERANCE):
        raise SymmetryError("矩阵不对称（容差 1e-12）")


def power_iteration_lmax(S: SparseMatrix,
                         tol: float = 1e-6,
                         max_iter: int = 10000,
                         seed: int = 0) -> float:
    """对称半正定矩阵的最大特征值估计

    Args:
        S: 对称半正定稀疏矩阵
        tol: 相对残差容差
        max_iter: 最大迭代次数
        seed: 初始向量随机种子

    Returns:
        λmax 估计值；零矩阵返回 0.0
    """
    _check_square_symmetric(S)
    return _power_iterate(lambda v: spmm(S, v), S.n_rows, tol, max_iter, seed)


def spectral_radius(S: SparseMatrix,
                    tol: float = 1e-6,
                    max_iter: int = 10000,
                    seed: int = 0) -> float:
    """对称（可不定）矩阵的谱半径

    对 S² 做幂迭代（两次 spmm，不形成稀疏乘积），返回其平方根。
    """
    _check_square_symmetric(S)
    squared = _power_iterate(lambda v: spmm(S, spmm(S, v)), S.n_rows, tol, max_iter, seed)
    return math.sqrt(max(squared, 0.0))
