"""
通用工具服务
有序并行映射、目录与文件工具、进度跟踪
"""

import os
import hashlib
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from typing import Any, Callable, Dict, Iterable, List, Optional, TypeVar

from ..config.configuration_service import get_config_service
from ..logging.logging_service import ILoggingService

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Iterable[T], max_workers: Optional[int] = None) -> List[R]:
    """线程池映射，结果按输入顺序返回

    max_workers 缺省取 GCRN_THREADS；单线程或单元素时直接串行执行。
    任何元素抛出的异常在收集结果时按输入顺序重新抛出。
    """
    items = list(items)
    workers = max_workers if max_workers is not None else get_config_service().get_thread_count()
    workers = max(1, min(int(workers), len(items)))
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="gcrn") as executor:
        return list(executor.map(fn, items))


class UtilityService:
    """工具服务实现类"""

    def __init__(self, logger: Optional[ILoggingService] = None):
        self._logger = logger

    def ensure_directory(self, path: str) -> str:
        """创建目录（已存在时不报错），返回绝对路径"""
        absolute = os.path.abspath(path)
        os.makedirs(absolute, exist_ok=True)
        if self._logger:
            self._logger.debug(f"输出目录就绪: {absolute}")
        return absolute

    def calculate_file_hash(self, file_path: str) -> str:
        """文件的 SHA-256 摘要"""
        digest = hashlib.sha256()
        with open(file_path, "rb") as f:
            for chunk in iter(lambda: f.read(65536), b""):
                digest.update(chunk)
        file_hash = digest.hexdigest()
        if self._logger:
            self._logger.debug(f"文件哈希: {file_path} -> {file_hash[:12]}...")
        return file_hash

    def split_into_batches(self, items: List[Any], batch_size: int) -> List[List[Any]]:
        """按顺序切分，最后一批可以不满"""
        if batch_size <= 0:
            raise ValueError("batch_size 必须大于 0")
        return [items[i:i + batch_size] for i in range(0, len(items), batch_size)]

    def parallel_map(self, fn: Callable[[T], R], items: Iterable[T], max_workers: Optional[int] = None) -> List[R]:
        return parallel_map(fn, items, max_workers)


class ProgressTracker:
    """进度跟踪器，约每 10% 记录一次"""

    def __init__(self, total: int, description: str = "处理中", logger: Optional[ILoggingService] = None):
        self.total = total
        self.current = 0
        self.description = description
        self.start_time = datetime.now()
        self._logger = logger

        if self._logger:
            self._logger.debug(f"进度跟踪开始: {description}, 总数: {total}")

    def update(self, increment: int = 1) -> None:
        self.current = min(self.total, self.current + increment)
        if self._logger and self.current % max(1, self.total // 10) == 0:
            progress = self.get_progress()
            self._logger.debug(f"进度更新: {progress['description']} - {progress['percentage']}%")

    def get_progress(self) -> Dict[str, Any]:
        percentage = (self.current / self.total) * 100 if self.total > 0 else 0
        elapsed_time = datetime.now() - self.start_time
        return {
            "current": self.current,
            "total": self.total,
            "percentage": round(percentage, 1),
            "description": self.description,
            "elapsed_seconds": elapsed_time.total_seconds(),
            "is_complete": self.current >= self.total
        }


_utility_service: Optional[UtilityService] = None


def get_utility_service() -> UtilityService:
    """获取工具服务单例"""
    global _utility_service
    if _utility_service is None:
        _utility_service = UtilityService()
    return _utility_service
