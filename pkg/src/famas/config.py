"""Tool configuration with CLI > environment > config-file precedence."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

from .spectrum import DEFAULT_K, DEFAULT_LAMBDA, RANKING_MODES

ENV_PREFIX = "FAMAS_"


class ConfigError(Exception):
    """Invalid or inconsistent configuration."""


@dataclass
class Config:
    k: int = DEFAULT_K
    lam: float = DEFAULT_LAMBDA
    mode: str = "famas"
    seed: int = 0
    extractor: str = "rules"  # rules | llm
    judge: str = "exact"  # exact | llm
    out: str = "out"
    char_budget: int = 12_000
    parallelism: int = 1
    llm_base_url: str = "http://localhost:8000/v1"
    llm_model: str = "qwen2.5-72b-instruct"
    llm_endpoint_path: str = "/chat/completions"
    runner_cmd: str = ""

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if not 0.5 < self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in (0.5, 1], got {self.lam}")
        if self.mode in ("famas", "famas-obeta", "famas-ogamma") and self.lam == 1.0:
            raise ConfigError(
                f"mode {self.mode} needs lambda < 1; use famas-olambda for the no-enhancement limit"
            )
        if self.mode not in RANKING_MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {RANKING_MODES}")
        if self.extractor not in ("rules", "llm"):
            raise ConfigError(f"extractor must be rules or llm, got {self.extractor!r}")
        if self.judge not in ("exact", "llm"):
            raise ConfigError(f"judge must be exact or llm, got {self.judge!r}")
        if self.char_budget < 1:
            raise ConfigError(f"char_budget must be >= 1, got {self.char_budget}")
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")


# env variable name for each field: FAMAS_K, FAMAS_LAMBDA, FAMAS_MODE, ...
_ENV_NAMES = {
    "k": "K",
    "lam": "LAMBDA",
    "mode": "MODE",
    "seed": "SEED",
    "extractor": "EXTRACTOR",
    "judge": "JUDGE",
    "out": "OUT",
    "char_budget": "CHAR_BUDGET",
    "parallelism": "PARALLELISM",
    "llm_base_url": "LLM_BASE_URL",
    "llm_model": "LLM_MODEL",
    "llm_endpoint_path": "LLM_ENDPOINT_PATH",
    "runner_cmd": "RUNNER_CMD",
}


def _coerce(name: str, raw: Any, target_type: type) -> Any:
    try:
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        return str(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot parse {name}={raw!r}: {exc}") from exc


def resolve_config(
    cli_values: Mapping[str, Any] | None = None,
    config_file: str | Path | None = None,
    env: Mapping[str, str] | None = None,
) -> Config:
    """Merge sources into a validated Config.

    Precedence (highest first): CLI values, FAMAS_* environment variables,
    the JSON config file, built-in defaults.  CLI values of None are unset.
    """
    env = os.environ if env is None else env
    file_values: dict[str, Any] = {}
    if config_file is not None:
        document = json.loads(Path(config_file).read_text(encoding="utf-8"))
        if not isinstance(document, dict):
            raise ConfigError("config file must hold a JSON object")
        known = {f.name for f in fields(Config)} | {"lambda"}
        unknown = set(document) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        file_values = dict(document)
        if "lambda" in file_values:
            file_values["lam"] = file_values.pop("lambda")

    config = Config()
    for field in fields(Config):
        target_type = type(getattr(config, field.name))
        value = getattr(config, field.name)
        if field.name in file_values:
            value = _coerce(field.name, file_values[field.name], target_type)
        env_name = ENV_PREFIX + _ENV_NAMES[field.name]
        if env_name in env:
            value = _coerce(env_name, env[env_name], target_type)
        if cli_values is not None and cli_values.get(field.name) is not None:
            value = _coerce(field.name, cli_values[field.name], target_type)
        setattr(config, field.name, value)

    config.validate()
    return config
