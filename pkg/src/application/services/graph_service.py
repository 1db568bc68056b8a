"""
图服务
按运行配置构造图（网格 / 图文件 / 点集 knn / 词表环形嵌入），图文件构建与统计信息
"""

from dataclasses import asdict, dataclass
from typing import Optional, Union

import numpy as np

from src.core.graph import Graph, LambdaMaxMode, Metric, grid_graph, knn_graph
from src.infrastructure import get_logger
from src.infrastructure.config.run_config import RunConfig
from src.infrastructure.serialization import load_graph, load_points, save_graph
from src.shared.exceptions import ConvergenceError

from .dataset_service import cycle_points

KernelWidth = Union[float, str]


@dataclass(frozen=True)
class GraphInfo:
    """图统计信息；度为加权度，unweighted 为邻居个数

    lambda_max_converged 为 False 时 lambda_max 是幂迭代最后一次的估计。
    """
    n: int
    edges: int
    lambda_max: float
    degree_min: float
    degree_mean: float
    degree_max: float
    unweighted_degree_min: int
    unweighted_degree_mean: float
    unweighted_degree_max: int
    isolated: int
    lambda_max_converged: bool = True

    def lines(self):
        yield f"n = {self.n}"
        yield f"edges = {self.edges}"
        yield f"lambda_max = {self.lambda_max:.10g}" + ("" if self.lambda_max_converged else " (unconverged)")
        yield f"degree min/mean/max = {self.degree_min:.6g} / {self.degree_mean:.6g} / {self.degree_max:.6g}"
        yield (f"neighbors min/mean/max = {self.unweighted_degree_min} / "
               f"{self.unweighted_degree_mean:.6g} / {self.unweighted_degree_max}")
        yield f"isolated = {self.isolated}"


def graph_info(graph: Graph) -> GraphInfo:
    """统计信息；λmax 一律用幂迭代估计，与图的 λmax 模式无关

    幂迭代未收敛（谱间隙很小的大图）时报告最后估计并标记为未收敛，不抛出。
    """
    estimator = graph
    if graph.lambda_max_mode != LambdaMaxMode.ESTIMATE:
        estimator = Graph(graph.adjacency, lambda_max_mode=LambdaMaxMode.ESTIMATE)
    try:
        lambda_max, converged = estimator.lambda_max, True
    except ConvergenceError as e:
        lambda_max, converged = e.last_estimate, False
    degrees = graph.degrees()
    counts = graph.unweighted_degrees()
    return GraphInfo(
        n=graph.n,
        edges=graph.edge_count,
        lambda_max=float(lambda_max),
        degree_min=float(degrees.min()),
        degree_mean=float(degrees.mean()),
        degree_max=float(degrees.max()),
        unweighted_degree_min=int(counts.min()),
        unweighted_degree_mean=float(counts.mean()),
        unweighted_degree_max=int(counts.max()),
        isolated=int(np.count_nonzero(counts == 0)),
        lambda_max_converged=converged,
    )


def build_graph(run: RunConfig) -> Graph:
    """按 graph.source 构造图"""
    g = run.graph
    kwargs = {"lambda_max_mode": LambdaMaxMode(g.lambda_max)}
    if g.source == "grid":
        return grid_graph(g.rows, g.cols, g.connectivity, kernel_width=g.kernel_width, **kwargs)
    if g.source == "file":
        return load_graph(g.path, **kwargs)
    if g.source == "knn":
        return knn_graph(load_points(g.points), g.k, Metric(g.metric), kernel_width=g.kernel_width, **kwargs)
    return knn_graph(cycle_points(run.tokens.vocab), g.k, Metric(g.metric), kernel_width=g.kernel_width, **kwargs)


class GraphService:
    """图服务"""

    def __init__(self, logger_service=None):
        self.logger = logger_service or get_logger()

    def build_for_run(self, run: RunConfig) -> Graph:
        graph = build_graph(run)
        self.logger.info("图构造完成", extra={
            "source": run.graph.source, "n": graph.n, "edges": graph.edge_count,
            "lambda_max_mode": graph.lambda_max_mode.value,
        })
        return graph

    def build_from_points(self,
                          points_path: str,
                          k: int,
                          metric: str = "cosine",
                          out_path: Optional[str] = None,
                          kernel_width: KernelWidth = "auto") -> Graph:
        """点集 knn 图，out_path 给出时写出 GCRNGRAPH 文件"""
        points = load_points(points_path)
        graph = knn_graph(points, k, Metric(metric), kernel_width=kernel_width)
        if out_path:
            save_graph(out_path, graph)
        self.logger.info(f"knn 图已构建: {points_path}", extra={
            "n": graph.n, "k": k, "metric": metric, "edges": graph.edge_count, "out": out_path,
        })
        return graph

    def info(self, path: str) -> GraphInfo:
        info = graph_info(load_graph(path))
        if not info.lambda_max_converged:
            self.logger.warning("λmax 幂迭代未收敛，报告最后估计；训练时可设 graph.lambda_max = bound",
                                extra={"path": path, "lambda_max": info.lambda_max})
        self.logger.info(f"图信息: {path}", extra=asdict(info))
        return info


_graph_service: Optional[GraphService] = None


def get_graph_service() -> GraphService:
    global _graph_service
    if _graph_service is None:
        _graph_service = GraphService()
    return _graph_service
