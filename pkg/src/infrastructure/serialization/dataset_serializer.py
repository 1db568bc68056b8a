"""
数据集文件
GCRNSEQ v1：第 2 行 `S T n d`，随后 S·T 帧，每帧 n 行、每行 d 个数值
GCRNTOK v1：第 2 行 `V count`，随后 count 个以空白分隔的词 id
"""

from typing import List, Union

import numpy as np

from src.core.datasets import SequenceDataset, TokenDataset
from src.shared.exceptions import ParseError

from .text_format import LineReader, format_row, parse_int, write_text

SEQUENCE_MAGIC = "GCRNSEQ v1"
TOKEN_MAGIC = "GCRNTOK v1"

Dataset = Union[SequenceDataset, TokenDataset]


def save_sequences(path: str, dataset: SequenceDataset) -> None:
    S, T, n, d = dataset.frames.shape
    lines: List[str] = [SEQUENCE_MAGIC, f"{S} {T} {n} {d}"]
    for row in dataset.frames.reshape(-1, d):
        lines.append(format_row(row))
    write_text(path, lines)


def load_sequences(path: str) -> SequenceDataset:
    reader = LineReader(path)
    reader.expect_header(SEQUENCE_MAGIC)
    S, T, n, d = reader.read_ints(("S", "T", "n", "d"))
    for name, value in (("T", T), ("n", n), ("d", d)):
        if value < 1:
            raise ParseError(f"{name} 必须 ≥ 1", line=2, field=name)

    frames = np.empty((S * T * n, d), dtype=np.float64)
    for row in range(S * T * n):
        frames[row] = reader.read_floats(d, "frame")
    if not reader.at_end():
        raise ParseError(f"帧数据多于声明的 S·T·n = {S * T * n} 行", line=reader.line_number + 1, field="S")
    if not np.all(np.isfinite(frames)):
        raise ParseError("帧数据存在非有限值", field="frame")
    return SequenceDataset(frames.reshape(S, T, n, d))


def save_tokens(path: str, dataset: TokenDataset) -> None:
    lines = [TOKEN_MAGIC, f"{dataset.vocab} {dataset.count}"]
    if dataset.count:
        lines.append(" ".join(str(int(i)) for i in dataset.ids))
    write_text(path, lines)


def load_tokens(path: str) -> TokenDataset:
    reader = LineReader(path)
    reader.expect_header(TOKEN_MAGIC)
    vocab, count = reader.read_ints(("V", "count"))
    if vocab < 1:
        raise ParseError("词表大小必须 ≥ 1", line=2, field="V")

    ids: List[int] = []
    for line, token in reader.remaining_tokens():
        if len(ids) == count:
            raise ParseError(f"词 id 多于声明的 count={count}", line=line, field="count")
        value = parse_int(token, line, "id", minimum=0)
        if value >= vocab:
            raise ParseError(f"词 id {value} 超出词表 [0, {vocab})", line=line, field="id")
        ids.append(value)
    if len(ids) != count:
        raise ParseError(f"词 id 少于声明的 count={count}，仅有 {len(ids)} 个",
                         line=reader.line_number + 1, field="count")
    return TokenDataset(vocab, np.array(ids, dtype=np.int64))


def detect_format(path: str) -> str:
    """返回文件头（第一条非空行）"""
    with open(path, "r", encoding="utf-8") as f:
        for raw in f:
            if raw.strip():
                return raw.strip()
    raise ParseError(f"{path} 为空文件", line=1, field="header")


def load_dataset(path: str) -> Dataset:
    """按文件头分派读取"""
    header = detect_format(path)
    if header == SEQUENCE_MAGIC:
        return load_sequences(path)
    if header == TOKEN_MAGIC:
        return load_tokens(path)
    raise ParseError(f"未知的数据集文件头 '{header}'", line=1, field="header")


def save_dataset(path: str, dataset: Dataset) -> None:
    if isinstance(dataset, TokenDataset):
        save_tokens(path, dataset)
    else:
        save_sequences(path, dataset)
