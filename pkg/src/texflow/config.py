# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

import copy
import tomllib
from pathlib import Path
from typing import Any, Literal

from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from texflow.exceptions import ArtifactIOError, ConfigurationError
from texflow.schemas import (
    ChannelSpec,
    DatasetPolicy,
    RenderConfig,
    SimulationConfig,
    TrainConfig,
    UNetConfig,
)

"""
Configuration management for texflow.
Process settings come from the environment; experiment settings come from a TOML run file.
"""

Preset = Literal["desk", "paper"]

# Accepted preset spellings that resolve to a canonical preset.
PRESET_ALIASES = {"full": "paper"}


class Settings(BaseSettings):
    """
    Process-level settings loaded from environment variables prefixed with TEXFLOW_.

    Attributes:
        ENV (str): The deployment environment (development, testing, production).
        LOG_LEVEL (str): The logging level (default: INFO).
        LOG_DIR (str): Directory of the rotating JSON log file.
        RETRY_STOP_AFTER_ATTEMPT (int): Max attempts for artifact reads and writes.
        RETRY_WAIT_MIN (float): Minimum wait between attempts, in seconds.
        RETRY_WAIT_MAX (float): Maximum wait between attempts, in seconds.
    """

    ENV: Literal["development", "testing", "production"] = "production"
    LOG_LEVEL: str = "INFO"
    LOG_DIR: str = "logs"

    # Resilience
    RETRY_STOP_AFTER_ATTEMPT: int = 3
    RETRY_WAIT_MIN: float = 0.1
    RETRY_WAIT_MAX: float = 2.0

    model_config = SettingsConfigDict(
        env_prefix="TEXFLOW_", env_file=".env", env_file_encoding="utf-8", case_sensitive=True, extra="ignore"
    )


def get_settings() -> Settings:
    return Settings()


class RunConfig(BaseSettings):
    """
    The full experiment tree of one pipeline run.

    Layers, lowest priority first: environment variables (TEXFLOW_RUN_<SECTION>__<FIELD>),
    preset defaults, the TOML run file, CLI flag overrides.

    Attributes:
        preset (str): Named geometry/scale preset the defaults came from.
        seed (int): Global seed; propagated to sections that did not set their own.
        simulation (SimulationConfig): Solver, geometry and boundary values.
        dataset (DatasetPolicy): Segmentation and split policy.
        unet (UNetConfig): Network architecture.
        train (TrainConfig): Optimization schedule.
        render (RenderConfig): Figure export options.
    """

    preset: Preset = "desk"
    seed: int = 0
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    dataset: DatasetPolicy = Field(default_factory=DatasetPolicy)
    unet: UNetConfig = Field(default_factory=UNetConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    render: RenderConfig = Field(default_factory=RenderConfig)

    model_config = SettingsConfigDict(
        env_prefix="TEXFLOW_RUN_", env_nested_delimiter="__", case_sensitive=False, extra="forbid"
    )


def canonical_preset(name: str) -> Preset:
    """
    Resolves a preset name or alias.

    Raises:
        ConfigurationError: If the name is unknown.
    """
    resolved = PRESET_ALIASES.get(name, name)
    if resolved not in ("desk", "paper"):
        raise ConfigurationError(f"Unknown preset '{name}'")
    return resolved  # type: ignore[return-value]


def _preset_table(name: str) -> dict[str, Any]:
    if canonical_preset(name) == "desk":
        return {
            "simulation": {"channel": ChannelSpec.desk().model_dump(), "n_steps": 2000},
            "unet": {"base_filters": 8},
        }
    return {
        "simulation": {"channel": ChannelSpec.paper().model_dump(), "n_steps": 1000},
        "unet": {"base_filters": 64},
    }


def preset_defaults(name: str) -> dict[str, Any]:
    """
    Returns the nested default values of a named preset.

    Args:
        name (str): "desk" (64x256 grid, 8 base filters) or "paper" (100x1000 grid, 64 base filters);
            "full" is accepted as an alias of "paper".

    Returns:
        dict[str, Any]: Nested section values suitable for `RunConfig`.

    Raises:
        ConfigurationError: If the preset is unknown.
    """
    return _deep_merge({}, _preset_table(name))


def _deep_merge(base: dict[str, Any], update: dict[str, Any]) -> dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


SEED_TARGETS = (("simulation", "seed"), ("unet", "seed"), ("train", "shuffle_seed"))


def _propagate_seed(data: dict[str, Any]) -> dict[str, Any]:
    """Copies a layer's global seed into the section seeds that layer leaves unset."""
    seed = data.get("seed")
    if seed is None:
        return data
    for section, key in SEED_TARGETS:
        data.setdefault(section, {}).setdefault(key, seed)
    return data


def _apply_flag_seed(data: dict[str, Any], flags: dict[str, Any]) -> dict[str, Any]:
    # A flag-level seed outranks section seeds from the run file, but not section seeds set by flags.
    if flags.get("seed") is None:
        return data
    for section, key in SEED_TARGETS:
        if key not in flags.get(section, {}):
            data.setdefault(section, {})[key] = flags["seed"]
    return data


def parse_override(text: str) -> dict[str, Any]:
    """
    Parses a `section.field=value` CLI override into a nested dict, value read as TOML.

    Args:
        text (str): Override such as `train.epochs=5` or `simulation.channel.h=0`.

    Returns:
        dict[str, Any]: The nested override.

    Raises:
        ConfigurationError: If the override is malformed.
    """
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigurationError(f"Malformed override '{text}', expected section.field=value")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    node: dict[str, Any] = {}
    cursor = node
    parts = key.strip().split(".")
    for part in parts[:-1]:
        cursor = cursor.setdefault(part, {})
    cursor[parts[-1]] = value
    return node


def load_run_config(
    path: str | Path | None = None,
    preset: str | None = None,
    overrides: list[dict[str, Any]] | None = None,
) -> RunConfig:
    """
    Resolves a RunConfig from preset defaults, an optional TOML file and CLI overrides.

    Args:
        path (str | Path | None): TOML run file.
        preset (str | None): Preset name or alias; falls back to an override, the file's `preset` key, then "desk".
        overrides (list[dict[str, Any]] | None): Nested overrides applied last (flags win).

    Returns:
        RunConfig: The validated configuration.

    Raises:
        ArtifactIOError: If the file is missing, not UTF-8 or not valid TOML.
        ConfigurationError: If validation fails (unknown keys included).
    """
    file_data: dict[str, Any] = {}
    if path is not None:
        config_path = Path(path)
        if not config_path.is_file():
            raise ArtifactIOError(f"Config file not found: {config_path}")
        try:
            file_data = tomllib.loads(config_path.read_text(encoding="utf-8"))
        except UnicodeDecodeError as e:
            raise ArtifactIOError(f"Config file {config_path} is not valid UTF-8: {e}") from e
        except tomllib.TOMLDecodeError as e:
            raise ArtifactIOError(f"Config file {config_path} is not valid TOML: {e}") from e

    override_data: dict[str, Any] = {}
    for item in overrides or []:
        override_data = _deep_merge(override_data, item)

    chosen = canonical_preset(preset or override_data.get("preset") or file_data.get("preset") or "desk")
    data = _deep_merge(preset_defaults(chosen), _propagate_seed(_deep_merge({}, file_data)))
    data = _deep_merge(data, override_data)
    data = _apply_flag_seed(data, override_data)
    data["preset"] = chosen
    try:
        return RunConfig(**data)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid run configuration: {e}") from e
