"""
基础设施层
提供统一的配置管理、日志服务、指标输出、文本序列化与并行工具
"""

# 配置服务
from .config.configuration_service import (
    IConfigurationService,
    ConfigurationService,
    Environment,
    ConfigurationValidationResult,
    get_config_service,
    create_config_service
)

# 运行配置
from .config.run_config import (
    RunConfig,
    load_run_config,
    parse_run_config,
    serialize_run_config
)

# 日志服务
from .logging.logging_service import (
    ILoggingService,
    LoggingService,
    LogLevel,
    PerformanceLogger,
    performance_monitor,
    get_logging_service,
    create_logging_service,
    setup_logging
)

# 指标
from .monitoring.metrics_service import (
    MetricRecord,
    MetricsService,
    create_metrics_service,
    read_metrics
)

# 序列化
from .serialization import (
    Checkpoint,
    load_checkpoint,
    save_checkpoint,
    load_dataset,
    save_dataset,
    load_graph,
    save_graph,
    load_points,
    save_points
)

# 工具
from .utilities.utility_service import (
    UtilityService,
    ProgressTracker,
    get_utility_service,
    parallel_map
)

# 工厂
from .factories.infrastructure_factory import (
    InfrastructureFactory,
    get_infrastructure_factory,
    initialize_infrastructure,
    get_config,
    get_logger
)

__all__ = [
    # 配置服务
    'IConfigurationService',
    'ConfigurationService',
    'Environment',
    'ConfigurationValidationResult',
    'get_config_service',
    'create_config_service',

    # 运行配置
    'RunConfig',
    'load_run_config',
    'parse_run_config',
    'serialize_run_config',

    # 日志服务
    'ILoggingService',
    'LoggingService',
    'LogLevel',
    'PerformanceLogger',
    'performance_monitor',
    'get_logging_service',
    'create_logging_service',
    'setup_logging',

    # 指标
    'MetricRecord',
    'MetricsService',
    'create_metrics_service',
    'read_metrics',

    # 序列化
    'Checkpoint',
    'load_checkpoint',
    'save_checkpoint',
    'load_dataset',
    'save_dataset',
    'load_graph',
    'save_graph',
    'load_points',
    'save_points',

    # 工具
    'UtilityService',
    'ProgressTracker',
    'get_utility_service',
    'parallel_map',

    # 工厂
    'InfrastructureFactory',
    'get_infrastructure_factory',
    'initialize_infrastructure',
    'get_config',
    'get_logger'
]
