"""
Engine configuration loaded from a YAML file and environment variables.

Resolution order: values in the YAML file named by ``--config`` or
``IOC_DECAY_CONFIG``, then ``IOC_DECAY_*`` environment variables, then the
defaults below.
"""

import os
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import ConfigError

CONFIG_ENV_VAR = "IOC_DECAY_CONFIG"

TimeUnitName = Literal["s", "h", "d"]
ModelName = Literal["linear", "exponential", "polynomial"]


class ModelParams(BaseModel):
    """Decay parameters for one attribute type."""
    model: ModelName = "polynomial"
    tau: Optional[float] = Field(default=None, gt=0)
    delta: float = Field(gt=0)
    unit: TimeUnitName = "h"

    @model_validator(mode="after")
    def _tau_required_for_polynomial(self) -> "ModelParams":
        if self.model == "polynomial" and self.tau is None:
            raise ValueError("polynomial model requires tau")
        return self


def _seeded_model_table() -> dict[str, ModelParams]:
    # Network indicators follow the compromised-IP example, file hashes the
    # malware-hash example.
    network = ModelParams(model="polynomial", tau=168, delta=0.55, unit="h")
    hashes = ModelParams(model="polynomial", tau=60, delta=0.3, unit="d")
    return {
        "ip-dest": network,
        "ip-src": network,
        "domain": network,
        "file-hash": hashes,
        "md5": hashes,
        "sha1": hashes,
        "sha256": hashes,
    }


class ScoringSettings(BaseModel):
    """Base-score weights."""
    weight_x: int = Field(default=50, ge=0, le=100)
    default_predicate_weight: int = Field(default=50, ge=0, le=100)
    default_source_confidence: float = Field(default=0.5, ge=0.0, le=1.0)

class DecaySettings(BaseModel):
    """Decay model table."""
    exponent_convention: Literal["reciprocal", "direct"] = "reciprocal"
    models: dict[str, ModelParams] = Field(default_factory=_seeded_model_table)
    default_model: ModelParams = Field(
        default_factory=lambda: ModelParams(model="polynomial", tau=30, delta=0.3, unit="d")
    )


class LifecycleSettings(BaseModel):
    """End-time estimator parameters."""
    tau_multiplier: float = Field(default=2.0, gt=0)
    tau_quantile: float = Field(default=0.95, gt=0, le=1)


class ApiSettings(BaseModel):
    """HTTP service settings."""
    bind_address: str = "127.0.0.1:8000"
    readonly: bool = False

    @field_validator("bind_address")
    @classmethod
    def _host_port(cls, value: str) -> str:
        host, sep, port = value.rpartition(":")
        if not sep or not host or not port.isdigit():
            raise ValueError(f"bind_address must be host:port, got {value!r}")
        return value

    @property
    def host(self) -> str:
        return self.bind_address.rpartition(":")[0]

    @property
    def port(self) -> int:
        return int(self.bind_address.rpartition(":")[2])


class Settings(BaseSettings):
    """Engine settings."""

    # Inputs
    taxonomy_dir: Path = Path("data/taxonomies")
    events_file: Optional[Path] = None
    sources_file: Optional[Path] = None
    sightings_file: Optional[Path] = None

    # Snapshot document
    store_path: Path = Path("var/store.json")

    scoring: ScoringSettings = Field(default_factory=ScoringSettings)
    decay: DecaySettings = Field(default_factory=DecaySettings)
    lifecycle: LifecycleSettings = Field(default_factory=LifecycleSettings)
    api: ApiSettings = Field(default_factory=ApiSettings)

    # Logging
    log_level: str = "INFO"
    log_file: Optional[Path] = None

    model_config = SettingsConfigDict(
        env_prefix="IOC_DECAY_",
        env_file=".env",
        env_file_encoding="utf-8",
        env_nested_delimiter="__",
        case_sensitive=False,
        extra="ignore",  # IOC_DECAY_CONFIG itself lands here
    )


def load_settings(config_path: Optional[Path | str] = None) -> Settings:
    """
    Build Settings from a YAML config file (if any) layered over env and defaults.

    Relative paths inside the file are resolved against the file's directory.

    Args:
        config_path: Explicit file; falls back to $IOC_DECAY_CONFIG.

    Returns:
        Settings: validated settings

    Raises:
        ConfigError: file missing, not YAML, or failing validation
    """
    raw_path = config_path or os.getenv(CONFIG_ENV_VAR)
    if not raw_path:
        try:
            return Settings()
        except ValidationError as e:
            raise ConfigError(f"Invalid environment configuration: {e}") from e

    path = Path(raw_path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")

    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Config file {path} is not valid YAML: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must contain a mapping")

    base = path.parent
    for key in ("taxonomy_dir", "events_file", "sources_file", "sightings_file", "store_path", "log_file"):
        value = data.get(key)
        if value is not None and not Path(value).is_absolute():
            data[key] = base / value

    try:
        return Settings(**data)
    except ValidationError as e:
        raise ConfigError(f"Invalid config file {path}: {e}") from e
