"""Configuration records shared by the experiments and the command line."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from typing import Any, Mapping


class ConfigError(ValueError):
    """Invalid or unknown configuration entries."""


def _coerce(value, default):
    if isinstance(default, tuple) and isinstance(value, list):
        return tuple(value)
    return value


def from_mapping(cls, data: Mapping[str, Any], base=None):
    """Build a config dataclass, rejecting keys the class does not declare."""
    if not isinstance(data, Mapping):
        raise ConfigError(f"{cls.__name__}: expected a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{cls.__name__}: unknown keys {unknown}")
    base = cls() if base is None else base
    updates = {k: _coerce(v, getattr(base, k)) for k, v in data.items()}
    try:
        return dataclasses.replace(base, **updates)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from exc


def to_mapping(cfg) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def config_hash(cfg) -> str:
    blob = json.dumps(to_mapping(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()
