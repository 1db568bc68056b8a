"""
测试公共夹具
"""
import pytest

from src.infrastructure.config.configuration_service import reset_config_service
from src.infrastructure.factories.infrastructure_factory import get_infrastructure_factory
from src.infrastructure.logging.logging_service import set_logging_service


@pytest.fixture(autouse=True)
def fresh_infrastructure():
    """每个测试结束后重置全局配置与日志单例，控制台日志绑定到当前 stderr"""
    yield
    get_infrastructure_factory().reset()
    set_logging_service(None)
    reset_config_service()
