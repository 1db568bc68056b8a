"""
数据集类型
帧序列数据集 (S × T × n × d) 与词 id 流数据集
"""

from dataclasses import dataclass

import numpy as np

from src.shared.exceptions import DataError


@dataclass(frozen=True, eq=False)
class SequenceDataset:
    """S 条长度为 T 的图信号序列，每帧 n × d"""
    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 4:
            raise DataError(f"序列数据集必须为 S×T×n×d，得到形状 {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise DataError("序列数据集存在非有限值")
        frames = frames.copy()
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def count(self) -> int:
        return self.frames.shape[0]

    @property
    def seq_len(self) -> int:
        return self.frames.shape[1]

    @property
    def n(self) -> int:
        return self.frames.shape[2]

    @property
    def d(self) -> int:
        return self.frames.shape[3]

    def split(self, valid_fraction: float) -> "tuple":
        """按顺序切分为 (train, valid)；验证集至少一条（数据不少于两条时）"""
        if not 0.0 <= valid_fraction < 1.0:
            raise DataError(f"valid_fraction 必须位于 [0, 1)，得到 {valid_fraction}")
        n_valid = int(round(self.count * valid_fraction))
        if valid_fraction > 0 and self.count >= 2:
            n_valid = min(max(n_valid, 1), self.count - 1)
        cut = self.count - n_valid
        return SequenceDataset(self.frames[:cut]), SequenceDataset(self.frames[cut:])


@dataclass(frozen=True, eq=False)
class TokenDataset:
    """词表大小 V 与一条词 id 流"""
    vocab: int
    ids: np.ndarray

    def __post_init__(self):
        if isinstance(self.vocab, bool) or int(self.vocab) != self.vocab or self.vocab < 1:
            raise DataError(f"词表大小必须为正整数，得到 {self.vocab!r}")
        ids = np.asarray(self.ids)
        if ids.ndim != 1:
            raise DataError(f"词 id 必须为一维序列，得到形状 {ids.shape}")
        if ids.size and not np.issubdtype(ids.dtype, np.integer):
            raise DataError("词 id 必须为整数")
        ids = ids.astype(np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab):
            raise DataError(f"词 id 必须位于 [0, {self.vocab})")
        ids.setflags(write=False)
        object.__setattr__(self, "vocab", int(self.vocab))
        object.__setattr__(self, "ids", ids)

    @property
    def count(self) -> int:
        return int(self.ids.size)
