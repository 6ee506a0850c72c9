"""Service configuration: model pins, batch limit, bind address."""

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

BACKENDS = ("stub", "transformers")

# Default model pins for the real backend. Revisions stay overridable in
# the config file; deployments should pin an exact commit there.
DEFAULT_NLI_MODEL = "ynie/roberta-large-snli_mnli_fever_anli_R1_R2_R3-nli"
DEFAULT_CRITIC_MODEL = "McGill-NLP/roberta-large-faithcritic"


class ConfigError(ValueError):
    """Invalid or unreadable service configuration."""


@dataclass(frozen=True)
class ModelPin:
    name: str
    revision: str = "main"


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8741
    backend: str = "stub"
    max_batch: int = 64
    device: str = "cpu"
    nli_model: ModelPin = field(default_factory=lambda: ModelPin(DEFAULT_NLI_MODEL))
    critic_model: ModelPin = field(default_factory=lambda: ModelPin(DEFAULT_CRITIC_MODEL))

    def __post_init__(self) -> None:
        problems = []
        if not 0 <= self.port <= 65535:
            problems.append(f"port must be in [0, 65535], got {self.port}")
        if self.backend not in BACKENDS:
            problems.append(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.max_batch < 1:
            problems.append(f"max_batch must be >= 1, got {self.max_batch}")
        if not self.host:
            problems.append("host must be non-empty")
        if problems:
            raise ConfigError("invalid service configuration: " + "; ".join(problems))


def _pin_from(value, default: ModelPin, label: str) -> ModelPin:
    if value is None:
        return default
    if isinstance(value, str):
        return ModelPin(name=value)
    if isinstance(value, dict):
        unknown = set(value) - {"name", "revision"}
        if unknown:
            raise ConfigError(f"unknown {label} keys: {sorted(unknown)}")
        return ModelPin(
            name=str(value.get("name", default.name)),
            revision=str(value.get("revision", "main")),
        )
    raise ConfigError(f"{label} must be a string or a table, got {type(value).__name__}")


def load_config(path: str | Path | None = None, **overrides) -> ServiceConfig:
    """Build the service config from an optional TOML file plus overrides.

    Override values of None are ignored so CLI flags can pass through
    unset options.
    """
    mapping: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                mapping = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file does not exist: {path}")
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file is not valid TOML: {exc}")
    known = {"host", "port", "backend", "max_batch", "device", "nli_model", "critic_model"}
    unknown = set(mapping) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(mapping)
    for key, value in overrides.items():
        if key not in known:
            raise ConfigError(f"unknown config override {key!r}")
        if value is not None:
            merged[key] = value
    defaults = ServiceConfig()
    return ServiceConfig(
        host=str(merged.get("host", defaults.host)),
        port=int(merged.get("port", defaults.port)),
        backend=str(merged.get("backend", defaults.backend)),
        max_batch=int(merged.get("max_batch", defaults.max_batch)),
        device=str(merged.get("device", defaults.device)),
        nli_model=_pin_from(merged.get("nli_model"), defaults.nli_model, "nli_model"),
        critic_model=_pin_from(
            merged.get("critic_model"), defaults.critic_model, "critic_model"
        ),
    )
