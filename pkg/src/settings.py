from __future__ import annotations

import json
from typing import Any, Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.errors import ConfigError


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="SKILLMIX_",
        case_sensitive=False,
        env_ignore_empty=True,
    )

    # Default output root when --out-dir is not given.
    out_root: str = "runs"
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"

    # Processes for independent seeds; 1 runs them in-process.
    workers: int = Field(default=1, ge=1)

    # Inline experiment document, e.g.
    # {"env":"composite-door","task":"door","seeds":[0,1,2],"budget":2000}
    # Used when no --config file is given.
    experiment_json: str | None = None

    def experiment(self) -> dict[str, Any]:
        """The inline experiment document as a dict; empty when unset."""

        if not self.experiment_json:
            return {}
        try:
            data: Any = json.loads(self.experiment_json)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"SKILLMIX_EXPERIMENT_JSON is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("SKILLMIX_EXPERIMENT_JSON must be a JSON object")
        return data
