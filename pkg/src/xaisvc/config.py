"""Application configuration: one TOML or JSON file plus env-var overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib


@dataclass
class AppConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    storage_path: str | None = None
    watts: float = 30.0
    parallelism: int = 2

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"


_ENV_FIELDS = {
    "XAISVC_HOST": ("host", str),
    "XAISVC_PORT": ("port", int),
    "XAISVC_STORAGE_PATH": ("storage_path", str),
    "XAISVC_WATTS": ("watts", float),
    "XAISVC_PARALLELISM": ("parallelism", int),
}


def load_config(path: str | Path | None = None,
                env: dict | None = None) -> AppConfig:
    """Read the config file (by extension), then apply env overrides."""
    env = os.environ if env is None else env
    values: dict = {}
    if path is not None:
        path = Path(path)
        if path.suffix == ".toml":
            values = tomllib.loads(path.read_text())
        elif path.suffix == ".json":
            values = json.loads(path.read_text())
        else:
            raise ValueError(f"config file must be .toml or .json, got {path.name}")
    config = AppConfig(**{k: v for k, v in values.items()
                          if k in AppConfig.__dataclass_fields__})
    for env_key, (attr, cast) in _ENV_FIELDS.items():
        if env_key in env:
            setattr(config, attr, cast(env[env_key]))
    return config
