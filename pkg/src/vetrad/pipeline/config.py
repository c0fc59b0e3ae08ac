"""Service configuration: plain-text KEY=VALUE file with env-var overrides.

Every key can be overridden by an environment variable named VETRAD_<KEY>,
e.g. VETRAD_WORKER_COUNT=8.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

ENV_PREFIX = "VETRAD_"


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    worker_count: int = 4
    max_attempts: int = 3
    aggregation_timeout_s: float = 120.0
    aggregation_tick_s: float = 0.25
    short_term_ttl_s: float = 600.0
    data_dir: str = "vetrad-data"
    ensemble_manifest: str = ""
    context_rules_path: str = ""
    drift_alpha: float = 0.01
    gate_entropy_threshold: float = 1.0
    queue_poll_s: float = 0.05

    def validate(self) -> None:
        if self.worker_count < 1:
            raise ConfigError("worker_count must be >= 1")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")
        if self.aggregation_timeout_s <= 0:
            raise ConfigError("aggregation_timeout_s must be positive")
        if self.short_term_ttl_s <= 0:
            raise ConfigError("short_term_ttl_s must be positive")


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    try:
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw


def load_config(path: str | None = None, environ: dict | None = None) -> PipelineConfig:
    """Read KEY=VALUE lines (``#`` comments allowed), then apply env overrides."""
    environ = os.environ if environ is None else environ
    values: dict = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected KEY=VALUE")
                key, _, raw = line.partition("=")
                name = key.strip().lower()
                if name not in _FIELD_TYPES:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key.strip()}")
                values[name] = _coerce(name, raw.strip())
    for name in _FIELD_TYPES:
        env_key = ENV_PREFIX + name.upper()
        if env_key in environ:
            values[name] = _coerce(name, environ[env_key])
    cfg = PipelineConfig(**values)
    cfg.validate()
    return cfg
