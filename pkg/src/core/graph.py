"""
图构造与拉普拉斯算子
knn / 网格图构造、归一化拉普拉斯、缩放拉普拉斯与跳数距离
"""

import math
import threading
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path
from scipy.spatial.distance import cdist

from src.core.sparse_linalg import (
    SparseMatrix,
    Triple,
    csr_from_coo,
    from_scipy,
    power_iteration_lmax,
)
from src.shared.exceptions import GraphError

KernelWidth = Union[float, str, None]

LAMBDA_MAX_BOUND = 2.0


class LambdaMaxMode(str, Enum):
    """λmax 获取方式"""
    ESTIMATE = "estimate"
    BOUND = "bound"


class Metric(str, Enum):
    """knn 距离度量"""
    EUCLIDEAN = "euclidean"
    COSINE = "cosine"


class Graph:
    """无向加权图

    邻接矩阵在构造时校验（精确对称、非负、零对角）；拉普拉斯、λmax 与
    缩放拉普拉斯首次访问时计算一次，之后可跨线程共享。
    """

    def __init__(self,
                 adjacency: SparseMatrix,
                 lambda_max_mode: Union[LambdaMaxMode, str] = LambdaMaxMode.ESTIMATE,
                 tol: float = 1e-6,
                 max_iter: int = 10000,
                 seed: int = 0):
        if adjacency.n_rows != adjacency.n_cols:
            raise GraphError(f"邻接矩阵必须为方阵，得到 {adjacency.shape}")
        if adjacency.n_rows < 1:
            raise GraphError("图至少需要 1 个顶点")
        if np.any(adjacency.values < 0):
            raise GraphError("邻接权重必须非负")
        if np.any(adjacency.diagonal() != 0):
            raise GraphError("邻接矩阵对角线必须为零（不允许自环）")
        if not adjacency.is_symmetric(0.0):
            raise GraphError("邻接矩阵必须精确对称")
        try:
            mode = LambdaMaxMode(lambda_max_mode)
        except ValueError:
            raise GraphError(f"未知的 lambda_max 模式: {lambda_max_mode}")

        self._adjacency = adjacency
        self._lambda_max_mode = mode
        self._tol = tol
        self._max_iter = max_iter
        self._seed = seed

        self._lock = threading.Lock()
        self._laplacian: Optional[SparseMatrix] = None
        self._lambda_max: Optional[float] = None
        self._scaled_laplacian: Optional[SparseMatrix] = None

    @property
    def n(self) -> int:
        return self._adjacency.n_rows

    @property
    def adjacency(self) -> SparseMatrix:
        return self._adjacency

    @property
    def lambda_max_mode(self) -> LambdaMaxMode:
        return self._lambda_max_mode

    @property
    def edge_count(self) -> int:
        """无向边数"""
        return self._adjacency.nnz // 2

    def edges(self) -> List[Triple]:
        """按 (i, j) 字典序列出 i < j 的边"""
        return [(i, j, w) for i, j, w in self._adjacency.triples() if i < j]

    def degrees(self) -> np.ndarray:
        """加权度"""
        return np.asarray(self._adjacency.to_scipy().sum(axis=1)).ravel()

    def unweighted_degrees(self) -> np.ndarray:
        return np.diff(self._adjacency.row_offsets)

    @property
    def laplacian(self) -> SparseMatrix:
        if self._laplacian is None:
            with self._lock:
                if self._laplacian is None:
                    self._laplacian = normalized_laplacian(self)
        return self._laplacian

    @property
    def lambda_max(self) -> float:
        if self._lambda_max is None:
            laplacian = self.laplacian
            with self._lock:
                if self._lambda_max is None:
                    if self._lambda_max_mode == LambdaMaxMode.BOUND:
                        self._lambda_max = LAMBDA_MAX_BOUND
                    else:
                        self._lambda_max = power_iteration_lmax(
                            laplacian, tol=self._tol, max_iter=self._max_iter, seed=self._seed
                        )
        return self._lambda_max

    @property
    def scaled_laplacian(self) -> SparseMatrix:
        if self._scaled_laplacian is None:
            laplacian = self.laplacian
            lmax = self.lambda_max
            with self._lock:
                if self._scaled_laplacian is None:
                    self._scaled_laplacian = scale_laplacian(laplacian, lmax)
        return self._scaled_laplacian

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, edges={self.edge_count}, lambda_max_mode={self._lambda_max_mode.value})"


def graph_from_edges(n: int, edges: List[Triple], **graph_kwargs) -> Graph:
    """由无向边列表构造图，每条边写入 (i, j) 与 (j, i)"""
    triples: List[Triple] = []
    for i, j, w in edges:
        triples.append((i, j, w))
        triples.append((j, i, w))
    return Graph(csr_from_coo(n, n, triples), **graph_kwargs)


def _resolve_kernel_width(kernel_width: KernelWidth, distances: List[float]) -> float:
    if kernel_width is None or kernel_width == "auto":
        if not distances:
            return 1.0
        sigma = math.fsum(distances) / len(distances)
        # 所有保留距离为零时退化为 1
        return sigma if sigma > 0 else 1.0
    try:
        sigma = float(kernel_width)
    except (TypeError, ValueError):
        raise GraphError(f"kernel_width 必须为正实数或 auto，得到 {kernel_width!r}")
    if not (sigma > 0 and math.isfinite(sigma)):
        raise GraphError(f"kernel_width 必须为正实数，得到 {sigma}")
    return sigma


def _gaussian(distance: float, sigma: float) -> float:
    weight = math.exp(-(distance * distance) / (sigma * sigma))
    if weight == 0.0:
        # 零权重会在 CSR 中被丢弃，保留的近邻边随之消失
        raise GraphError(f"高斯核权重下溢为 0 (距离 {distance:.6g}, kernel_width {sigma:.6g})，请增大 kernel_width")
    return weight


def knn_graph(points: np.ndarray,
              k: int,
              metric: Union[Metric, str] = Metric.EUCLIDEAN,
              kernel_width: KernelWidth = "auto",
              **graph_kwargs) -> Graph:
    """k 近邻图

    有向 knn 边取高斯权重 exp(-d²/σ²)，再按逐元素最大值对称化。

    Args:
        points: n×p 点集
        k: 每个点保留的近邻数，1 ≤ k < n
        metric: euclidean 或 cosine（1 - 余弦相似度）
        kernel_width: σ，auto 时取所有保留距离的均值

    Returns:
        对称化后的 Graph
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise GraphError(f"点集必须为 n×p 矩阵，得到形状 {points.shape}")
    n = points.shape[0]
    if n < 2:
        raise GraphError("knn 图至少需要 2 个点")
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or not 1 <= k < n:
        raise GraphError(f"k 必须满足 1 ≤ k < n={n}，得到 {k}")
    if not np.all(np.isfinite(points)):
        raise GraphError("点坐标必须有限")
    try:
        metric = Metric(metric)
    except ValueError:
        raise GraphError(f"未知的距离度量: {metric}")

    if metric == Metric.COSINE:
        norms = np.linalg.norm(points, axis=1)
        zero_rows = np.flatnonzero(norms == 0)
        if zero_rows.size:
            raise GraphError(f"余弦距离下存在零范数点: {zero_rows.tolist()}")
        distances = np.maximum(cdist(points, points, metric="cosine"), 0.0)
    else:
        distances = cdist(points, points, metric="euclidean")
    np.fill_diagonal(distances, np.inf)

    neighbours = np.argsort(distances, axis=1, kind="stable")[:, :k]
    retained = [(i, int(j), float(distances[i, j])) for i in range(n) for j in neighbours[i]]
    sigma = _resolve_kernel_width(kernel_width, [d for _, _, d in retained])

    symmetric: Dict[Tuple[int, int], float] = {}
    for i, j, d in retained:
        key = (min(i, j), max(i, j))
        weight = _gaussian(d, sigma)
        symmetric[key] = max(symmetric.get(key, 0.0), weight)

    return graph_from_edges(n, [(i, j, w) for (i, j), w in sorted(symmetric.items())], **graph_kwargs)


_LATTICE_OFFSETS = {
    4: [(-1, 0), (0, -1), (0, 1), (1, 0)],
    8: [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
}


def grid_graph(rows: int,
               cols: int,
               connectivity: int = 8,
               kernel_width: KernelWidth = "auto",
               **graph_kwargs) -> Graph:
    """规则网格图，顶点编号 r * cols + c

    连接格点邻居（4 连通: |Δr|+|Δc| = 1；8 连通: max(|Δr|,|Δc|) = 1），
    权重为欧氏距离的高斯核；内部顶点与格点坐标上的 knn 图一致。
    """
    if rows < 1 or cols < 1:
        raise GraphError(f"网格尺寸必须 ≥ 1，得到 {rows}×{cols}")
    if connectivity not in _LATTICE_OFFSETS:
        raise GraphError(f"connectivity 必须为 4 或 8，得到 {connectivity}")

    directed: List[Tuple[int, int, float]] = []
    for r in range(rows):
        for c in range(cols):
            for dr, dc in _LATTICE_OFFSETS[connectivity]:
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols:
                    directed.append((r * cols + c, rr * cols + cc, math.hypot(dr, dc)))

    sigma = _resolve_kernel_width(kernel_width, [d for _, _, d in directed])
    triples = [(i, j, _gaussian(d, sigma)) for i, j, d in directed]
    n = rows * cols
    return Graph(csr_from_coo(n, n, triples), **graph_kwargs)


def normalized_laplacian(g: Graph) -> SparseMatrix:
    """L = I − D^{-1/2} A D^{-1/2}

    非对角项写作 −w / sqrt(d_i·d_j) 以保持精确对称；孤立顶点所在行为单位行。
    """
    coo = g.adjacency.to_scipy().tocoo()
    degrees = g.degrees()
    off_diagonal = -coo.data / np.sqrt(degrees[coo.row] * degrees[coo.col])

    rows = np.concatenate([np.arange(g.n), coo.row])
    cols = np.concatenate([np.arange(g.n), coo.col])
    values = np.concatenate([np.ones(g.n), off_diagonal])
    return from_scipy(sp.coo_matrix((values, (rows, cols)), shape=(g.n, g.n)))


def scale_laplacian(L: SparseMatrix, lambda_max: float) -> SparseMatrix:
    """L̃ = (2/λmax)·L − I"""
    if not (lambda_max > 0 and math.isfinite(lambda_max)):
        raise GraphError(f"lambda_max 必须为正有限数，得到 {lambda_max}")
    if L.n_rows != L.n_cols:
        raise GraphError(f"拉普拉斯必须为方阵，得到 {L.shape}")
    scaled = L.to_scipy() * (2.0 / lambda_max) - sp.identity(L.n_rows, format="csr")
    return from_scipy(scaled)


def hop_distances(g: Graph, source: int) -> np.ndarray:
    """无权 BFS 跳数，不可达为 inf"""
    if not 0 <= source < g.n:
        raise GraphError(f"源顶点 {source} 越界 (n={g.n})")
    return shortest_path(g.adjacency.to_scipy(), directed=False, unweighted=True, indices=source)
