"""
基础设施工具模块
提供有序并行映射与通用工具
"""

from .utility_service import (
    UtilityService,
    ProgressTracker,
    get_utility_service,
    parallel_map,
)

__all__ = [
    "UtilityService",
    "ProgressTracker",
    "get_utility_service",
    "parallel_map",
]
