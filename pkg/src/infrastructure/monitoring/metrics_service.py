"""
指标服务实现
按 (epoch, split) 收集训练指标，并通过 pandas 追加写入 metrics.csv
"""

import os
import threading
from dataclasses import asdict, dataclass
from typing import List, Optional

import pandas as pd

from ..logging.logging_service import ILoggingService, get_logging_service

METRICS_COLUMNS = ["epoch", "split", "loss", "perplexity", "wall_ms"]
FLOAT_FORMAT = "%.17g"


@dataclass(frozen=True)
class MetricRecord:
    """一行指标；perplexity 仅词任务有值"""
    epoch: int
    split: str
    loss: float
    perplexity: Optional[float] = None
    wall_ms: float = 0.0


class MetricsService:
    """指标服务

    历史记录保存在内存中（加锁），flush() 把尚未写出的行追加到 CSV。
    确定性模式下 wall_ms 一律记为 0，重复运行得到逐字节相同的文件。
    """

    def __init__(self,
                 csv_path: Optional[str] = None,
                 deterministic: bool = True,
                 append: bool = False,
                 logger_service: Optional[ILoggingService] = None):
        """初始化指标服务

        Args:
            csv_path: metrics.csv 路径，None 表示只在内存中保存
            deterministic: 是否把 wall_ms 写为 0
            append: 续训时追加到已有文件，否则重写表头
            logger_service: 日志服务实例
        """
        self._logger = logger_service or get_logging_service()
        self._csv_path = csv_path
        self._deterministic = deterministic
        self._records: List[MetricRecord] = []
        self._flushed = 0
        self._lock = threading.RLock()

        if csv_path and (not append or not os.path.exists(csv_path)):
            self._write_frame(pd.DataFrame(columns=METRICS_COLUMNS), mode="w", header=True)

    @property
    def csv_path(self) -> Optional[str]:
        return self._csv_path

    def record(self, epoch: int, split: str, loss: float,
               perplexity: Optional[float] = None, wall_ms: float = 0.0) -> MetricRecord:
        """记录一行指标"""
        record = MetricRecord(
            epoch=int(epoch),
            split=split,
            loss=float(loss),
            perplexity=None if perplexity is None else float(perplexity),
            wall_ms=0.0 if self._deterministic else float(wall_ms),
        )
        with self._lock:
            self._records.append(record)
        self._logger.debug(f"记录指标: epoch {record.epoch} {split}", extra=asdict(record))
        return record

    def history(self) -> List[MetricRecord]:
        with self._lock:
            return list(self._records)

    def to_frame(self, records: Optional[List[MetricRecord]] = None) -> pd.DataFrame:
        rows = self.history() if records is None else records
        return pd.DataFrame([asdict(r) for r in rows], columns=METRICS_COLUMNS)

    def flush(self) -> int:
        """追加写出新增的行，返回写出的行数"""
        with self._lock:
            pending = self._records[self._flushed:]
            if not self._csv_path or not pending:
                return 0
            self._write_frame(self.to_frame(pending), mode="a", header=False)
            self._flushed = len(self._records)
            return len(pending)

    def truncate_after(self, epoch: int) -> int:
        """删除 CSV 中 epoch 之后的行并重写文件，返回删除的行数

        续训起点早于文件末尾时（例如从 best.ckpt 续训）调用，避免重复的 epoch 行。
        """
        with self._lock:
            if not self._csv_path or not os.path.exists(self._csv_path):
                return 0
            frame = read_metrics(self._csv_path)
            kept = frame[frame["epoch"] <= epoch]
            dropped = len(frame) - len(kept)
            if dropped:
                self._write_frame(kept, mode="w", header=True)
                self._logger.info(f"metrics.csv 截断到 epoch {epoch}", extra={"dropped_rows": dropped})
            return dropped

    def _write_frame(self, frame: pd.DataFrame, mode: str, header: bool) -> None:
        directory = os.path.dirname(self._csv_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        frame.to_csv(self._csv_path, mode=mode, header=header, index=False,
                     float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")


def read_metrics(csv_path: str) -> pd.DataFrame:
    """读取 metrics.csv"""
    return pd.read_csv(csv_path, dtype={"split": str}, float_precision="round_trip")


def create_metrics_service(csv_path: Optional[str] = None,
                           deterministic: bool = True,
                           append: bool = False,
                           logger_service: Optional[ILoggingService] = None) -> MetricsService:
    """创建新的指标服务实例（每次训练运行一个）"""
    return MetricsService(csv_path, deterministic, append, logger_service)
