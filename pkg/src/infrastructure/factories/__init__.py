"""基础设施工厂模块"""

from .infrastructure_factory import (
    InfrastructureFactory,
    get_infrastructure_factory,
    initialize_infrastructure,
    get_config,
    get_logger,
)

__all__ = [
    'InfrastructureFactory',
    'get_infrastructure_factory',
    'initialize_infrastructure',
    'get_config',
    'get_logger',
]
