"""
图文件与点集文件
GCRNGRAPH v1：第 1 行文件头，第 2 行 `n m`，随后 m 行 `i j w`（0 起始，i < j，w > 0）
点集文件：每行一个点，坐标以空白分隔，`#` 开头为注释
"""

import math
from typing import List, Set, Tuple

import numpy as np

from src.core.graph import Graph, graph_from_edges
from src.shared.exceptions import GraphError, ParseError

from .text_format import LineReader, format_float, format_row, parse_float, parse_int, write_text

GRAPH_MAGIC = "GCRNGRAPH v1"


def save_graph(path: str, graph: Graph) -> None:
    """写出图的上三角边表"""
    edges = graph.edges()
    lines = [GRAPH_MAGIC, f"{graph.n} {len(edges)}"]
    lines.extend(f"{i} {j} {format_float(w)}" for i, j, w in edges)
    write_text(path, lines)


def load_graph(path: str, **graph_kwargs) -> Graph:
    """读取并校验图文件；graph_kwargs 透传给 Graph（λmax 模式等）"""
    reader = LineReader(path)
    reader.expect_header(GRAPH_MAGIC)
    n, m = reader.read_ints(("n", "m"))
    if n < 1:
        raise ParseError("顶点数必须 ≥ 1", line=reader.line_number, field="n")

    edges: List[Tuple[int, int, float]] = []
    seen: Set[Tuple[int, int]] = set()
    for _ in range(m):
        line, tokens = reader.read_tokens("edge")
        if len(tokens) != 3:
            raise ParseError(f"边应为 'i j w'，得到 {len(tokens)} 个字段", line=line, field="edge")
        i = parse_int(tokens[0], line, "i", minimum=0)
        j = parse_int(tokens[1], line, "j", minimum=0)
        w = parse_float(tokens[2], line, "w")
        if i >= n or j >= n:
            raise ParseError(f"顶点 id 超出范围 [0, {n})", line=line, field="i" if i >= n else "j")
        if i == j:
            raise ParseError(f"不允许自环 ({i}, {j})", line=line, field="j")
        if i > j:
            raise ParseError(f"边须满足 i < j，得到 ({i}, {j})", line=line, field="i")
        if (i, j) in seen:
            raise ParseError(f"重复的边 ({i}, {j})", line=line, field="edge")
        if not math.isfinite(w) or w <= 0:
            raise ParseError(f"边权必须为正有限数，得到 {tokens[2]}", line=line, field="w")
        seen.add((i, j))
        edges.append((i, j, w))

    if not reader.at_end():
        raise ParseError(f"边数多于声明的 m={m}", line=reader.line_number + 1, field="m")
    try:
        return graph_from_edges(n, edges, **graph_kwargs)
    except GraphError as e:
        raise ParseError(f"图文件内容非法: {e}")


def save_points(path: str, points: np.ndarray) -> None:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"点集必须为 n×p 矩阵，得到形状 {points.shape}")
    write_text(path, [format_row(row) for row in points])


def load_points(path: str) -> np.ndarray:
    """读取点集；所有点维度一致且为有限值"""
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()

    rows: List[List[float]] = []
    dim = None
    for number, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        row = [parse_float(token, number, "coordinate") for token in text.split()]
        if dim is None:
            dim = len(row)
        elif len(row) != dim:
            raise ParseError(f"点的维度应为 {dim}，得到 {len(row)}", line=number, field="coordinate")
        if not all(math.isfinite(v) for v in row):
            raise ParseError("坐标必须为有限值", line=number, field="coordinate")
        rows.append(row)

    if not rows:
        raise ParseError(f"{path} 中没有任何点", field="points")
    return np.array(rows, dtype=np.float64)
