import logging
import os
import typing
from dataclasses import fields
from typing import Any, Dict, Optional

import yaml

from entity.RunConfig import RunConfig
from util.Errors import ConfigError

logger = logging.getLogger(__name__)

_PATH_KEYS = ("train_images", "train_labels", "test_images", "test_labels", "train_csv", "test_csv",
              "model_path", "mutant_dir", "report_dir")


class ConfigUtil:
    def __init__(self):
        pass

    @staticmethod
    def read_yaml(config_path: str) -> Dict[str, Any]:
        """从YAML配置文件中读取扁平键值，文件不存在时返回空配置"""
        if not os.path.exists(config_path):
            logger.info("配置文件不存在: %s，使用默认配置", config_path)
            return {}
        try:
            with open(config_path, 'r', encoding='utf-8') as file:
                config = yaml.safe_load(file) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"YAML格式错误: {config_path}: {e}") from e
        if not isinstance(config, dict):
            raise ConfigError(f"{config_path}: top level must be a mapping")
        return config

    @staticmethod
    def field_type(name: str):
        """RunConfig 字段的基础类型：Optional[X] 取 X，List[int] 返回 list"""
        annotation = typing.get_type_hints(RunConfig)[name]
        args = [a for a in typing.get_args(annotation) if a is not type(None)]
        if typing.get_origin(annotation) is list:
            return list
        if typing.get_origin(annotation) is typing.Union and args:
            return args[0]
        return annotation

    @staticmethod
    def is_optional(name: str) -> bool:
        return type(None) in typing.get_args(typing.get_type_hints(RunConfig)[name])

    @staticmethod
    def coerce(name: str, value):
        """把 YAML / 命令行的值转换为字段类型"""
        if value is None:
            return None
        kind = ConfigUtil.field_type(name)
        try:
            if kind is list:
                if isinstance(value, str):
                    value = [v for v in value.replace(',', ' ').split() if v]
                return [int(v) for v in value]
            if kind is bool:
                if isinstance(value, str):
                    lowered = value.strip().lower()
                    if lowered not in ('true', 'false', '1', '0', 'yes', 'no'):
                        raise ValueError(value)
                    return lowered in ('true', '1', 'yes')
                return bool(value)
            if kind is int:
                if isinstance(value, float) and not value.is_integer():
                    raise ValueError(value)
                return int(value)
            if kind is float:
                return float(value)
            value = str(value)
            if name in _PATH_KEYS:
                # 规范化路径分隔符
                value = value.replace('\\', '/')
            return value
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid value for {name}: {value!r}") from e

    @staticmethod
    def load_run_config(config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """
        默认值 ← config.yaml ← 命令行覆盖
        Raises:
            ConfigError: 未知键或非法值
        """
        values = ConfigUtil.read_yaml(config_path) if config_path else {}
        known = {f.name for f in fields(RunConfig)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        for key, value in (overrides or {}).items():
            if value is not None:
                values[key] = value
        coerced = {key: ConfigUtil.coerce(key, value) for key, value in values.items()}
        coerced = {key: value for key, value in coerced.items() if value is not None or ConfigUtil.is_optional(key)}
        return RunConfig(**coerced)
