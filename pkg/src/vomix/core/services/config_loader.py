"""Run-configuration loading with environment variable substitution.

A run configuration names a model preset (optionally overriding its shape),
a pruning schedule, strategy axes, protected tokens, input normalization and
a seed. Two file forms are accepted:

    # run.cfg
    preset = vit-b16-224
    schedule = const:${RATIO:-0.05}:12
    mean = 0.5,0.5,0.5

or the same keys as a YAML mapping in a ``.yaml`` / ``.yml`` file.
"""

import logging
import os
import re
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from vomix.core.engine.strategies import validate
from vomix.core.exceptions import ConfigLoadError, ConfigurationError
from vomix.core.models.strategy import STRATEGY_AXES, StrategyConfig
from vomix.core.models.vit import PRESETS, ViTConfig

logger = logging.getLogger(__name__)

MODEL_KEYS: tuple[str, ...] = (
    "image_size",
    "patch_size",
    "channels",
    "depth",
    "embed_dim",
    "heads",
    "mlp_ratio",
    "classes",
    "class_token",
)

RECOGNIZED_KEYS: tuple[str, ...] = (
    "preset",
    *MODEL_KEYS,
    "schedule",
    *STRATEGY_AXES,
    "random_seed",
    "protect",
    "mean",
    "std",
    "seed",
)


def substitute_env_vars(value: Any) -> Any:
    """Recursively substitute ${VAR} patterns with environment variables.

    Supports:
    - ${VAR} - Required variable (raises if not set)
    - ${VAR:-default} - Variable with default value

    Raises:
        ConfigLoadError: If required variable is not set.
    """
    if isinstance(value, str):
        pattern = r"\$\{([^}:-]+)(?::-([^}]*))?\}"

        def replace(match: re.Match[str]) -> str:
            var_name = match.group(1)
            default = match.group(2)

            env_value = os.environ.get(var_name)
            if env_value is not None:
                return env_value
            elif default is not None:
                return default
            else:
                raise ConfigLoadError(
                    f"Environment variable '{var_name}' is not set and no default provided"
                )

        return re.sub(pattern, replace, value)

    elif isinstance(value, dict):
        return {k: substitute_env_vars(v) for k, v in value.items()}

    elif isinstance(value, list):
        return [substitute_env_vars(item) for item in value]

    else:
        return value


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return tuple(item.strip() for item in value.split(",") if item.strip())
    if isinstance(value, int | float):
        return (value,)
    return value


class RunConfig(BaseModel):
    """Typed view of a run-configuration file. Every key is optional."""

    model_config = ConfigDict(frozen=True)

    preset: str | None = None
    image_size: int | None = None
    patch_size: int | None = None
    channels: int | None = None
    depth: int | None = None
    embed_dim: int | None = None
    heads: int | None = None
    mlp_ratio: float | None = None
    classes: int | None = None
    class_token: bool | None = None
    schedule: str | None = None
    selection: str | None = None
    fanout: str | None = None
    feature: str | None = None
    metric: str | None = None
    query_mix: str | None = None
    attn_mix: str | None = None
    random_seed: int | None = None
    protect: tuple[int, ...] | None = None
    mean: tuple[float, ...] | None = None
    std: tuple[float, ...] | None = None
    seed: int | None = None

    @field_validator("protect", "mean", "std", mode="before")
    @classmethod
    def _comma_list(cls, value: Any) -> Any:
        return _split_list(value)

    def model_overrides(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in MODEL_KEYS if getattr(self, k) is not None}

    def strategy_values(self) -> dict[str, Any]:
        keys = (*STRATEGY_AXES, "random_seed")
        return {k: getattr(self, k) for k in keys if getattr(self, k) is not None}


def load_yaml_config(path: Path) -> dict[str, Any]:
    """Load a YAML configuration file with environment variable substitution.

    Raises:
        ConfigLoadError: If file cannot be loaded or parsed.
    """
    if not path.exists():
        raise ConfigLoadError(f"Configuration file not found: {path}")

    try:
        with open(path) as f:
            config = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigLoadError(f"Invalid YAML in {path}: {e}") from e

    if config is None:
        raise ConfigLoadError(f"Empty configuration file: {path}")
    if not isinstance(config, dict):
        raise ConfigLoadError(f"Expected a mapping at the top of {path}")

    return substitute_env_vars(config)


def load_keyvalue_config(path: Path) -> dict[str, str]:
    """Load ``key = value`` lines; ``#`` starts a comment.

    Raises:
        ConfigLoadError: If the file is missing, empty or has a malformed line.
    """
    if not path.exists():
        raise ConfigLoadError(f"Configuration file not found: {path}")

    config: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigLoadError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        config[key.strip()] = value.strip()

    if not config:
        raise ConfigLoadError(f"Empty configuration file: {path}")
    return substitute_env_vars(config)


def load_config(path: Path) -> RunConfig:
    """Load a run configuration, choosing the parser by file suffix.

    Raises:
        ConfigLoadError: On unreadable files, unknown keys or invalid values.
    """
    path = Path(path)
    if path.suffix.lower() in (".yaml", ".yml"):
        raw = load_yaml_config(path)
    else:
        raw = load_keyvalue_config(path)

    unknown = sorted(set(raw) - set(RECOGNIZED_KEYS))
    if unknown:
        raise ConfigLoadError(f"Unknown configuration key(s) in {path}: {', '.join(unknown)}")

    try:
        config = RunConfig(**raw)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(p) for p in first["loc"])
        raise ConfigLoadError(f"Invalid value for {field!r} in {path}: {first['msg']}") from None

    logger.info(f"Loaded run configuration from {path}")
    return config


def resolve_model_config(
    preset: str | None, overrides: Mapping[str, Any] | None = None
) -> ViTConfig:
    """Start from a baked preset and apply shape overrides.

    With no preset the overrides must describe a complete model.

    Raises:
        ConfigurationError: On unknown presets or inconsistent shapes.
    """
    values: dict[str, Any] = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigurationError(
                f"Unknown preset {preset!r}. Available: {', '.join(sorted(PRESETS))}"
            )
        values = PRESETS[preset].model_dump()
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if preset is None:
        values.setdefault("name", "custom")

    try:
        return ViTConfig(**values)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "model"
        raise ConfigurationError(f"Invalid model configuration ({where}): {first['msg']}") from None


def resolve_strategy(*layers: Mapping[str, Any] | None) -> StrategyConfig:
    """Merge strategy settings, later layers winning, and validate."""
    merged: dict[str, Any] = {}
    for layer in layers:
        merged.update({k: v for k, v in (layer or {}).items() if v is not None})
    return validate(merged)
