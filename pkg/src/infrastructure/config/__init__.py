"""配置管理模块：环境配置（GCRN_* 变量）与运行配置（key = value 文件）"""

from .configuration_service import (
    IConfigurationService,
    ConfigurationService,
    Environment,
    ConfigurationValidationResult,
    get_config_service,
    create_config_service,
    reset_config_service,
    default_thread_count,
)
from .run_config import (
    RunConfig,
    load_run_config,
    parse_run_config,
    serialize_run_config,
    run_config_from_flat,
    known_keys,
)

__all__ = [
    'IConfigurationService',
    'ConfigurationService',
    'Environment',
    'ConfigurationValidationResult',
    'get_config_service',
    'create_config_service',
    'reset_config_service',
    'default_thread_count',
    'RunConfig',
    'load_run_config',
    'parse_run_config',
    'serialize_run_config',
    'run_config_from_flat',
    'known_keys',
]
