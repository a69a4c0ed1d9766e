"""Flat ``key=value`` run configuration: defaults < config file < command-line flags."""
from __future__ import annotations

from dataclasses import fields
from pathlib import Path

from .encoders import ModelConfig
from .errors import ConfigError
from .training import TrainConfig

_EXTRA = {"threads": 1}


def defaults() -> dict:
    out = {f.name: f.default for f in fields(ModelConfig)}
    out.update({f.name: f.default for f in fields(TrainConfig)})
    out.update(_EXTRA)
    return out


def _coerce(key: str, raw: str, default):
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int) or (default is None and raw.lstrip("-").isdigit()):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    return raw


def parse_config(text: str, source: str = "<config>") -> dict:
    base = defaults()
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected key=value")
        if key not in base:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value, base[key])
    return out


def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def resolve(file_values: dict | None = None, overrides: dict | None = None) -> dict:
    """Merge with precedence flags > file > defaults; ``None`` overrides are ignored."""
    cfg = defaults()
    for layer in (file_values or {}, overrides or {}):
        for key, value in layer.items():
            if key not in cfg:
                raise ConfigError(f"unknown key {key!r}")
            if value is not None:
                cfg[key] = value
    return cfg


def model_config(cfg: dict) -> ModelConfig:
    return ModelConfig(**{f.name: cfg[f.name] for f in fields(ModelConfig)})


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(**{f.name: cfg[f.name] for f in fields(TrainConfig)})


def render(cfg: dict) -> str:
    return "".join(f"{k}={'none' if v is None else v}\n" for k, v in sorted(cfg.items()))
