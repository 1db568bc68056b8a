"""
版本化文本格式的公共读写工具
"""

import os
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.shared.exceptions import ParseError

FLOAT_FORMAT = ".17g"


def format_float(value: float) -> str:
    """17 位有效数字，64 位浮点无损往返"""
    return format(float(value), FLOAT_FORMAT)


def format_row(values: Sequence[float]) -> str:
    return " ".join(format_float(v) for v in values)


class LineReader:
    """逐行读取，跳过空行，所有错误携带 1 起始的行号"""

    def __init__(self, path: str):
        self.path = path
        try:
            with open(path, "r", encoding="utf-8") as f:
                self._lines = f.read().splitlines()
        except UnicodeDecodeError as e:
            raise ParseError(f"{path} 不是 UTF-8 文本: {e}")
        self._index = 0

    @property
    def line_number(self) -> int:
        return self._index

    def _next(self, field: str) -> Tuple[int, str]:
        while self._index < len(self._lines):
            self._index += 1
            text = self._lines[self._index - 1].strip()
            if text:
                return self._index, text
        raise ParseError(f"{self.path} 意外结束", line=self._index + 1, field=field)

    def peek(self) -> Optional[str]:
        for text in self._lines[self._index:]:
            if text.strip():
                return text.strip()
        return None

    def at_end(self) -> bool:
        return self.peek() is None

    def expect_header(self, magic: str) -> None:
        line, text = self._next("header")
        if text != magic:
            raise ParseError(f"文件头应为 '{magic}'，得到 '{text}'", line=line, field="header")

    def read_ints(self, fields: Sequence[str], minimum: int = 0) -> List[int]:
        """读取一行恰好 len(fields) 个整数"""
        line, text = self._next(fields[0])
        tokens = text.split()
        if len(tokens) != len(fields):
            raise ParseError(f"应有 {len(fields)} 个字段 ({' '.join(fields)})，得到 {len(tokens)} 个",
                             line=line, field=fields[min(len(tokens), len(fields) - 1)])
        values = []
        for name, token in zip(fields, tokens):
            values.append(parse_int(token, line, name, minimum))
        return values

    def read_line(self, field: str) -> Tuple[int, str]:
        """下一条非空行（已去除首尾空白）及其行号"""
        return self._next(field)

    def read_tokens(self, field: str) -> Tuple[int, List[str]]:
        line, text = self._next(field)
        return line, text.split()

    def read_floats(self, count: int, field: str) -> np.ndarray:
        """读取一行恰好 count 个浮点数"""
        line, tokens = self.read_tokens(field)
        if len(tokens) != count:
            raise ParseError(f"应有 {count} 个数值，得到 {len(tokens)} 个", line=line, field=field)
        return np.array([parse_float(token, line, field) for token in tokens], dtype=np.float64)

    def remaining_tokens(self) -> Iterator[Tuple[int, str]]:
        """剩余所有非空行中的记号及其行号"""
        while self._index < len(self._lines):
            self._index += 1
            for token in self._lines[self._index - 1].split():
                yield self._index, token


def parse_int(token: str, line: int, field: str, minimum: Optional[int] = None) -> int:
    try:
        value = int(token)
    except ValueError:
        raise ParseError(f"'{token}' 不是整数", line=line, field=field)
    if minimum is not None and value < minimum:
        raise ParseError(f"{field} 必须 ≥ {minimum}，得到 {value}", line=line, field=field)
    return value


def parse_float(token: str, line: int, field: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"'{token}' 不是数值", line=line, field=field)


def write_text(path: str, lines: List[str]) -> None:
    """以 \\n 结尾写出，必要时创建父目录"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
