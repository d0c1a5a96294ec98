"""Application configuration.
Process settings come from environment variables (and an optional .env file);
run settings come from a TOML run config with dotted CLI overrides.
"""

import json
import os
import tomllib
from pathlib import Path
from typing import Any, Sequence
from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict
from ..models.run import RunConfig
from .exceptions import ConfigError

EFFECTIVE_CONFIG_NAME = "effective_config.json"


class Settings(BaseSettings):
    """Process settings loaded from environment variables."""

    UWF_CACHE_DIR: Path = Path.home() / ".cache" / "uwfscreen"
    UWF_LOG_LEVEL: str = "INFO"
    UWF_DEVICE: str = "cpu"
    UWF_NUM_THREADS: int | None = None

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")


settings = Settings()  # type: ignore


def apply_cache_dir() -> Path:
    """Point the torch hub and Hugging Face caches at UWF_CACHE_DIR."""
    cache_dir = Path(settings.UWF_CACHE_DIR)
    cache_dir.mkdir(parents=True, exist_ok=True)
    os.environ.setdefault("TORCH_HOME", str(cache_dir / "torch"))
    os.environ.setdefault("HF_HOME", str(cache_dir / "huggingface"))
    import torch.hub  # pylint: disable=import-outside-toplevel

    torch.hub.set_dir(os.environ["TORCH_HOME"] + "/hub")
    return cache_dir


def _parse_override_value(raw: str) -> Any:
    try:
        return tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        return raw


def apply_overrides(data: dict, overrides: Sequence[str]) -> dict:
    """Apply `section.key=value` overrides; values are parsed as TOML literals."""
    for override in overrides:
        if "=" not in override:
            raise ConfigError(f"Override {override!r} must look like section.key=value")
        dotted, raw = override.split("=", 1)
        keys = [key.strip() for key in dotted.split(".") if key.strip()]
        if not keys:
            raise ConfigError(f"Override {override!r} has an empty key")
        target = data
        for key in keys[:-1]:
            node = target.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"Override {override!r}: {key} is not a section")
            target = node
        target[keys[-1]] = _parse_override_value(raw.strip())
    return data


def load_run_config(
    path: Path | None = None, overrides: Sequence[str] = ()
) -> RunConfig:
    """Read a TOML run config, apply CLI overrides and validate it."""
    data: dict = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        try:
            with path.open("rb") as handle:
                data = tomllib.load(handle)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"Config file {path} is not valid TOML: {exc}") from exc

    data = apply_overrides(data, overrides)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"Invalid config value at {location}: {first['msg']}") from exc


def config_snapshot(config: RunConfig) -> dict:
    return json.loads(config.model_dump_json())


def write_effective_config(config: RunConfig, directory: Path) -> Path:
    """Write the merged config next to the outputs it produced."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / EFFECTIVE_CONFIG_NAME
    path.write_text(
        json.dumps(config_snapshot(config), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return path
