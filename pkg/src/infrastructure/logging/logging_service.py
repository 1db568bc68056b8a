"""
日志服务
控制台日志写到 stderr，stdout 只留给命令结果；可选 JSON 行格式与轮转日志文件。
每条日志可携带 extra 字典（epoch、split、loss 等），两种格式都会完整输出。
"""

import os
import sys
import json
import time
import logging
import functools
from abc import ABC, abstractmethod
from contextlib import contextmanager
from datetime import datetime
from enum import Enum
from logging.handlers import RotatingFileHandler
from typing import Any, Dict, Iterator, List, Optional, TextIO, Union

LOGGER_NAME = "gcrn"
Extra = Optional[Dict[str, Any]]


class LogLevel(Enum):
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"
    CRITICAL = "CRITICAL"

    @property
    def numeric(self) -> int:
        return logging.getLevelName(self.value)


class ILoggingService(ABC):
    """日志服务抽象接口"""

    @abstractmethod
    def debug(self, message: str, extra: Extra = None) -> None:
        ...

    @abstractmethod
    def info(self, message: str, extra: Extra = None) -> None:
        ...

    @abstractmethod
    def warning(self, message: str, extra: Extra = None) -> None:
        ...

    @abstractmethod
    def error(self, message: str, exception: Optional[BaseException] = None, extra: Extra = None) -> None:
        ...


def _dump(data: Any) -> str:
    return json.dumps(data, ensure_ascii=False, default=str)


class StructuredFormatter(logging.Formatter):
    """一条记录一行 JSON"""

    def format(self, record: logging.LogRecord) -> str:
        entry: Dict[str, Any] = {
            "timestamp": datetime.fromtimestamp(record.created).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "location": f"{record.module}:{record.funcName}:{record.lineno}",
            "extra_data": getattr(record, "extra_data", None),
        }
        if record.exc_info:
            entry["exception_info"] = self.formatException(record.exc_info)
        return _dump(entry)


class HumanReadableFormatter(logging.Formatter):
    """`时间 级别 名称: 消息 [EXTRA: {...}]`"""

    def __init__(self):
        super().__init__(fmt="%(asctime)s %(levelname)-7s %(name)s: %(message)s", datefmt="%H:%M:%S")

    def format(self, record: logging.LogRecord) -> str:
        text = super().format(record)
        extra_data = getattr(record, "extra_data", None)
        return f"{text} [EXTRA: {_dump(extra_data)}]" if extra_data else text


class LoggingService(ILoggingService):
    """基于标准 logging 的日志服务；同名服务重建时替换旧的处理器"""

    def __init__(self,
                 name: str = LOGGER_NAME,
                 level: Union[LogLevel, str] = LogLevel.INFO,
                 log_file_path: Optional[str] = None,
                 max_file_size_mb: int = 10,
                 backup_count: int = 5,
                 use_structured_logging: bool = False,
                 enable_console_output: bool = True,
                 stream: Optional[TextIO] = None):
        self.name = name
        self.use_structured_logging = use_structured_logging
        self.logger = logging.getLogger(name)
        self.logger.propagate = False
        self.set_level(level)

        formatter = StructuredFormatter() if use_structured_logging else HumanReadableFormatter()
        handlers: List[logging.Handler] = []
        if enable_console_output:
            handlers.append(logging.StreamHandler(stream or sys.stderr))
        if log_file_path:
            handlers.append(self._file_handler(log_file_path, max_file_size_mb, backup_count))

        for old in list(self.logger.handlers):
            self.logger.removeHandler(old)
            old.close()
        for handler in handlers:
            handler.setFormatter(formatter)
            self.logger.addHandler(handler)

    @staticmethod
    def _file_handler(path: str, max_file_size_mb: int, backup_count: int) -> logging.Handler:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        return RotatingFileHandler(path, maxBytes=max_file_size_mb * 1024 * 1024,
                                   backupCount=backup_count, encoding="utf-8")

    def _emit(self, level: int, message: str, extra: Extra, exception: Optional[BaseException] = None) -> None:
        self.logger.log(level, message, exc_info=exception, extra={"extra_data": extra} if extra else None)

    def debug(self, message: str, extra: Extra = None) -> None:
        self._emit(logging.DEBUG, message, extra)

    def info(self, message: str, extra: Extra = None) -> None:
        self._emit(logging.INFO, message, extra)

    def warning(self, message: str, extra: Extra = None) -> None:
        self._emit(logging.WARNING, message, extra)

    def error(self, message: str, exception: Optional[BaseException] = None, extra: Extra = None) -> None:
        self._emit(logging.ERROR, message, extra, exception)

    def set_level(self, level: Union[LogLevel, str]) -> None:
        self.logger.setLevel(LogLevel(str(level.value if isinstance(level, LogLevel) else level).upper()).numeric)

    def get_logger(self) -> logging.Logger:
        return self.logger


class PerformanceLogger:
    """耗时日志：服务调用与每个 (epoch, split)"""

    SLOW_SECONDS = 60.0

    def __init__(self, logging_service: ILoggingService):
        self.logging_service = logging_service

    @contextmanager
    def track(self, func_name: str, **context) -> Iterator[None]:
        """记录代码块耗时；异常照常抛出，日志标记 success=False"""
        start = time.perf_counter()
        outcome: Dict[str, Any] = {"success": True}
        try:
            yield
        except Exception as e:
            outcome = {"success": False, "error": str(e)}
            raise
        finally:
            self.log_function_performance(func_name, time.perf_counter() - start, **outcome, **context)

    def log_function_performance(self, func_name: str, execution_time: float, **kwargs) -> None:
        extra = {"function_name": func_name, "execution_time_seconds": round(execution_time, 3), **kwargs}
        if execution_time > self.SLOW_SECONDS:
            self.logging_service.warning(f"{func_name} 用时 {execution_time:.1f} 秒", extra=extra)
        else:
            self.logging_service.info(f"{func_name} 完成，用时 {execution_time:.2f} 秒", extra=extra)

    def log_epoch(self, epoch: int, split: str, loss: float, wall_ms: float, **kwargs) -> None:
        self.logging_service.info(
            f"epoch {epoch} {split} loss={loss:.6g}",
            extra={"epoch": epoch, "split": split, "loss": loss, "wall_ms": round(wall_ms, 1), **kwargs},
        )


def performance_monitor(logging_service: Optional[ILoggingService] = None):
    """为长耗时的服务方法记录用时；未指定日志服务时在调用时取全局服务"""
    def decorator(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            with PerformanceLogger(logging_service or get_logging_service()).track(func.__name__):
                return func(*args, **kwargs)
        return wrapper
    return decorator


_logging_service: Optional[LoggingService] = None


def get_logging_service() -> LoggingService:
    global _logging_service
    if _logging_service is None:
        _logging_service = LoggingService()
    return _logging_service


def set_logging_service(service: Optional[LoggingService]) -> None:
    """替换全局日志服务；None 表示下次使用时重建默认服务"""
    global _logging_service
    _logging_service = service


def create_logging_service(config_service) -> LoggingService:
    """按环境配置（GCRN_LOG_* 等）创建日志服务"""
    get = config_service.get_value
    return LoggingService(
        level=str(get("log_level", "INFO")),
        log_file_path=get("log_file_path") or None,
        max_file_size_mb=get("log_max_file_size_mb", 10),
        backup_count=get("log_backup_count", 5),
        use_structured_logging=bool(get("structured_logging", False)),
    )


def get_logger() -> LoggingService:
    return get_logging_service()


def setup_logging(config_service=None) -> LoggingService:
    """建立并注册全局日志服务"""
    service = create_logging_service(config_service) if config_service else LoggingService()
    set_logging_service(service)
    return service
