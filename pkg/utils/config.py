"""
Configuration loading: YAML file with ${ENV} placeholders, typed sections.
"""
import dataclasses
import logging
import os
import re
import typing
from pathlib import Path
from typing import Any, Dict, Optional, Type, TypeVar

import yaml
from dotenv import load_dotenv

from .errors import ConfigError

logger = logging.getLogger(__name__)

T = TypeVar("T")

_PLACEHOLDER = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)(?::-([^}]*))?\}")


def substitute_env(text: str) -> str:
    """
    Replace ${VAR} and ${VAR:-fallback} placeholders with environment values.

    Unset variables without a fallback become empty, which YAML reads as null,
    so the built-in default of that key applies.
    """
    def _replace(match):
        value = os.environ.get(match.group(1))
        if value is None or value == "":
            value = match.group(2) if match.group(2) is not None else ""
        return value

    return _PLACEHOLDER.sub(_replace, text)


def load_yaml_config(path: Optional[str] = None) -> Dict[str, Any]:
    """
    Load a YAML (or JSON) config file after resolving environment placeholders.

    Args:
        path: Config file path; None returns an empty mapping

    Returns:
        Mapping of section name to section mapping
    """
    load_dotenv()
    if path is None:
        return {}
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError(f"config file {config_path} does not exist")
    try:
        data = yaml.safe_load(substitute_env(config_path.read_text()))
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {config_path}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{config_path}: top level must be a mapping")
    logger.info(f"Loaded config from {config_path} ({len(data)} sections)")
    return data


def _coerce(value: Any, annotation: Any, name: str) -> Any:
    origin = typing.get_origin(annotation)
    if origin is typing.Union:
        args = [a for a in typing.get_args(annotation) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], name)
    if origin in (tuple, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{name}: expected a list, got {value!r}")
        args = typing.get_args(annotation)
        inner = args[0] if args else Any
        items = [_coerce(v, inner, name) for v in value]
        return tuple(items) if origin is tuple else items
    if annotation is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if annotation is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if annotation is bool:
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false, got {value!r}")
        return value
    if annotation is str:
        return str(value)
    return value


def build_section(cls: Type[T], section: Optional[Dict[str, Any]], name: str, base: Optional[T] = None) -> T:
    """
    Overlay a config section onto a dataclass instance.

    Args:
        cls: Target dataclass type
        section: Mapping read from the config file (None keeps the base)
        name: Section name used in error messages
        base: Starting instance (defaults to cls())

    Returns:
        New instance with the section's non-null values applied
    """
    instance = base if base is not None else cls()
    if not section:
        return instance
    if not isinstance(section, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    changes = {}
    for key, value in section.items():
        if key not in known:
            raise ConfigError(f"unknown key '{name}.{key}'")
        if value is None:
            continue
        changes[key] = _coerce(value, hints[key], f"{name}.{key}")
    try:
        return dataclasses.replace(instance, **changes)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"section '{name}': {e}") from e
