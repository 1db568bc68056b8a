"""
环境配置服务
进程级设置：工作线程数与日志。来源依次为 set_value、环境变量（可由 .env 提供）、
按运行环境调整后的内置默认值。
"""

import os
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional

import psutil
from dotenv import load_dotenv

ENV_PREFIX = "GCRN_"
_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class Environment(Enum):
    DEVELOPMENT = "development"
    PRODUCTION = "production"
    TESTING = "testing"


@dataclass
class ConfigurationValidationResult:
    is_valid: bool
    errors: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)


class IConfigurationService(ABC):
    """配置服务抽象接口"""

    @abstractmethod
    def get_value(self, key: str, default: Any = None) -> Any:
        ...

    @abstractmethod
    def set_value(self, key: str, value: Any) -> None:
        ...

    @abstractmethod
    def validate_configuration(self) -> ConfigurationValidationResult:
        ...

    @abstractmethod
    def get_environment(self) -> Environment:
        ...

    @abstractmethod
    def get_all_configs(self) -> Dict[str, Any]:
        ...


def default_thread_count() -> int:
    """逻辑 CPU 数，无法检测时为 1"""
    return psutil.cpu_count(logical=True) or 1


def _parse_bool(raw: str) -> bool:
    return raw.strip().lower() in ("true", "1", "yes", "on")


@dataclass(frozen=True)
class _Setting:
    """一个配置项：默认值、环境变量名与字符串解析函数"""
    key: str
    default: Callable[[], Any]
    parse: Callable[[str], Any] = str
    env_name: Optional[str] = None

    @property
    def variable(self) -> str:
        return self.env_name or ENV_PREFIX + self.key.upper()


_SETTINGS = {s.key: s for s in (
    _Setting("threads", default_thread_count, int),
    _Setting("log_level", lambda: "INFO", lambda raw: raw.strip().upper()),
    _Setting("log_file_path", lambda: "", env_name="GCRN_LOG_FILE"),
    _Setting("log_max_file_size_mb", lambda: 10, int),
    _Setting("log_backup_count", lambda: 5, int),
    _Setting("structured_logging", lambda: False, _parse_bool),
)}

# 各运行环境相对 development 的默认值差异
_ENVIRONMENT_DEFAULTS: Dict[Environment, Dict[str, Any]] = {
    Environment.DEVELOPMENT: {},
    Environment.PRODUCTION: {"log_level": "WARNING", "structured_logging": True},
    Environment.TESTING: {"log_level": "DEBUG"},
}


def env_key(key: str) -> str:
    """配置项对应的环境变量名"""
    setting = _SETTINGS.get(key)
    return setting.variable if setting else ENV_PREFIX + key.upper()


class ConfigurationService(IConfigurationService):
    """读取 GCRN_* 环境变量的配置服务

    无法解析的环境变量值保留为原字符串，由 validate_configuration 报告。
    """

    def __init__(self, environment: Optional[Environment] = None, load_env_file: bool = True):
        if load_env_file:
            load_dotenv()
        self._environment = environment or self._detect_environment()
        self._overrides: Dict[str, Any] = {}
        self._resolved: Dict[str, Any] = {}

    @staticmethod
    def _detect_environment() -> Environment:
        raw = os.getenv(ENV_PREFIX + "ENVIRONMENT", Environment.DEVELOPMENT.value).strip().lower()
        try:
            return Environment(raw)
        except ValueError:
            return Environment.DEVELOPMENT

    def _resolve(self, setting: _Setting) -> Any:
        raw = os.getenv(setting.variable)
        if raw is None:
            return _ENVIRONMENT_DEFAULTS[self._environment].get(setting.key, setting.default())
        try:
            return setting.parse(raw)
        except ValueError:
            return raw

    def get_value(self, key: str, default: Any = None) -> Any:
        if key in self._overrides:
            return self._overrides[key]
        setting = _SETTINGS.get(key)
        if setting is None:
            return default
        if key not in self._resolved:
            self._resolved[key] = self._resolve(setting)
        return self._resolved[key]

    def set_value(self, key: str, value: Any) -> None:
        self._overrides[key] = value

    def validate_configuration(self) -> ConfigurationValidationResult:
        errors: List[str] = []
        warnings: List[str] = []

        threads = self.get_value("threads")
        cpus = default_thread_count()
        if not _is_int(threads):
            errors.append(f"{env_key('threads')} 必须为整数，得到 {threads!r}")
        elif threads < 1:
            errors.append(f"{env_key('threads')} 必须 ≥ 1，得到 {threads}")
        elif threads > cpus:
            warnings.append(f"线程数 {threads} 超过逻辑 CPU 数 {cpus}")

        level = str(self.get_value("log_level")).upper()
        if level not in _LOG_LEVELS:
            errors.append(f"未知的日志级别: {level}，可选 {', '.join(_LOG_LEVELS)}")

        for key in ("log_max_file_size_mb", "log_backup_count"):
            value = self.get_value(key)
            if not _is_int(value) or value < 0:
                errors.append(f"{env_key(key)} 必须为非负整数，得到 {value!r}")

        return ConfigurationValidationResult(is_valid=not errors, errors=errors, warnings=warnings)

    def get_environment(self) -> Environment:
        return self._environment

    def get_all_configs(self) -> Dict[str, Any]:
        return {key: self.get_value(key) for key in _SETTINGS}

    def get_thread_count(self) -> int:
        """工作线程上限；配置非法时为 1"""
        threads = self.get_value("threads")
        return threads if _is_int(threads) and threads >= 1 else 1

    def reload_configuration(self) -> None:
        """重新读取 .env 与环境变量，set_value 的值保留"""
        load_dotenv(override=True)
        self._resolved.clear()


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


_config_service: Optional[ConfigurationService] = None


def get_config_service() -> ConfigurationService:
    global _config_service
    if _config_service is None:
        _config_service = ConfigurationService()
    return _config_service


def create_config_service(environment: Optional[Environment] = None,
                          load_env_file: bool = True) -> ConfigurationService:
    return ConfigurationService(environment, load_env_file)


def reset_config_service() -> None:
    global _config_service
    _config_service = None
