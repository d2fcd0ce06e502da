import os
import re
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from src.common.errors import ConfigError

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "config" / "config.yaml"


def merge_dicts(base: Dict, override: Dict) -> Dict:
    """Recursively merge override into a copy of base."""
    result = base.copy()
    for key, value in override.items():
        if isinstance(value, dict) and key in result and isinstance(result[key], dict):
            result[key] = merge_dicts(result[key], value)
        else:
            result[key] = value
    return result


def load_yaml(path: os.PathLike | str) -> Dict[str, Any]:
    """Load a YAML mapping from file."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Config file {path} is not valid YAML: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must contain a mapping at the top level")
    return data


def substitute_env_vars(obj: Any) -> Any:
    """Substitute ${VAR} and ${VAR:default} references in string values."""
    if isinstance(obj, str):
        # Match ${VAR:default} or ${VAR}
        matches = re.findall(r'\${([^}]+)}', obj)
        for match in matches:
            var_name, default = (match.split(':', 1) + [None])[:2] if ':' in match else (match, None)
            value = os.getenv(var_name, default)
            obj = obj.replace(f"${{{match}}}", value if value is not None else "")
        return obj
    elif isinstance(obj, dict):
        return {k: substitute_env_vars(v) for k, v in obj.items()}
    elif isinstance(obj, list):
        return [substitute_env_vars(item) for item in obj]
    return obj


class Config:
    """Manages packaged configuration with environment overrides and variable substitution."""
    def __init__(self, config_path: os.PathLike | str = DEFAULT_CONFIG_PATH, environment: Optional[str] = None):
        self.config_path = Path(config_path)
        self.config = load_yaml(self.config_path)
        self.environment = environment or os.getenv("TARGET_AUG_ENV") or self.get("system.environment", "default")
        self._apply_environment_overrides()
        self.config = substitute_env_vars(self.config)

    def _apply_environment_overrides(self):
        """Apply environment-specific configuration overrides."""
        env_overrides = self.config.get("environments", {}).get(self.environment, {}) or {}
        self.config = merge_dicts(self.config, env_overrides)

    def get(self, key: str, default: Optional[Any] = None) -> Any:
        """Retrieve a configuration value by dotted key path."""
        value = self.config
        for k in key.split('.'):
            try:
                value = value[k]
            except (KeyError, TypeError):
                return default
        return value

    def section(self, name: str) -> Dict[str, Any]:
        """Return a copy of one top-level section."""
        return dict(self.config.get(name, {}) or {})

    def merged_with(self, path: os.PathLike | str) -> Dict[str, Any]:
        """Packaged defaults deep-merged with a user run config file."""
        user = substitute_env_vars(load_yaml(path))
        user.pop("environments", None)
        base = {k: v for k, v in self.config.items() if k != "environments"}
        return merge_dicts(base, user)


@lru_cache(maxsize=1)
def get_config() -> Config:
    """Shared packaged Config instance."""
    return Config(os.getenv("TARGET_AUG_CONFIG", DEFAULT_CONFIG_PATH))
