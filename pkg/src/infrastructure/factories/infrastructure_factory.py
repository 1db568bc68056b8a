"""
基础设施工厂
进程启动时读取环境配置、校验并建立全局日志服务；之后 get_config / get_logger 返回同一组实例
"""

from typing import Any, Dict, Optional

from src.shared.exceptions import ConfigError

from ..config.configuration_service import (
    ConfigurationService,
    Environment,
    IConfigurationService,
    default_thread_count,
    get_config_service,
)
from ..logging.logging_service import ILoggingService, get_logging_service, setup_logging


class InfrastructureFactory:
    """配置服务与日志服务的持有者"""

    def __init__(self):
        self._config_service: Optional[IConfigurationService] = None
        self._logging_service: Optional[ILoggingService] = None

    @property
    def is_initialized(self) -> bool:
        return self._logging_service is not None

    def initialize(self, environment: Optional[Environment] = None) -> None:
        """读取并校验环境配置，然后建立日志服务；重复调用无效果

        Raises:
            ConfigError: GCRN_* 环境变量取值非法（此时日志服务尚未建立）
        """
        if self.is_initialized:
            return
        config = get_config_service() if environment is None else ConfigurationService(environment)
        result = config.validate_configuration()
        if not result.is_valid:
            raise ConfigError("环境配置验证失败: " + "; ".join(result.errors))

        logger = setup_logging(config)
        for warning in result.warnings:
            logger.warning(f"配置警告: {warning}")
        self._config_service, self._logging_service = config, logger
        logger.debug("基础设施初始化完成", extra=self.get_system_info())

    def get_config_service(self) -> IConfigurationService:
        if not self.is_initialized:
            self.initialize()
        return self._config_service

    def get_logging_service(self) -> ILoggingService:
        if not self.is_initialized:
            self.initialize()
        return self._logging_service

    def get_system_info(self) -> Dict[str, Any]:
        config = self._config_service or get_config_service()
        return {
            "environment": config.get_environment().value,
            "cpus": default_thread_count(),
            "configs": config.get_all_configs(),
        }

    def reset(self) -> None:
        """丢弃已建立的服务，下次使用时重新初始化"""
        self._config_service = None
        self._logging_service = None


_infrastructure_factory: Optional[InfrastructureFactory] = None


def get_infrastructure_factory() -> InfrastructureFactory:
    global _infrastructure_factory
    if _infrastructure_factory is None:
        _infrastructure_factory = InfrastructureFactory()
    return _infrastructure_factory


def initialize_infrastructure(environment: Optional[Environment] = None) -> None:
    get_infrastructure_factory().initialize(environment)


def get_config() -> IConfigurationService:
    return get_infrastructure_factory().get_config_service()


def get_logger() -> ILoggingService:
    """已初始化时返回工厂的日志服务，否则返回全局默认服务（不触发环境校验）"""
    factory = get_infrastructure_factory()
    return factory.get_logging_service() if factory.is_initialized else get_logging_service()
