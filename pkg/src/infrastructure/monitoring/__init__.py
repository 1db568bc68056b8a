"""
监控模块
训练指标收集与 metrics.csv 输出
"""

from .metrics_service import (
    METRICS_COLUMNS,
    MetricRecord,
    MetricsService,
    create_metrics_service,
    read_metrics,
)

__all__ = [
    "METRICS_COLUMNS",
    "MetricRecord",
    "MetricsService",
    "create_metrics_service",
    "read_metrics",
]
