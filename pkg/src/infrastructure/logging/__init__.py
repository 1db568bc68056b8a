"""日志管理模块"""

from .logging_service import (
    ILoggingService,
    LoggingService,
    LogLevel,
    PerformanceLogger,
    performance_monitor,
    get_logging_service,
    set_logging_service,
    create_logging_service,
    get_logger,
    setup_logging,
)

__all__ = [
    'ILoggingService',
    'LoggingService',
    'LogLevel',
    'PerformanceLogger',
    'performance_monitor',
    'get_logging_service',
    'set_logging_service',
    'create_logging_service',
    'get_logger',
    'setup_logging',
]
