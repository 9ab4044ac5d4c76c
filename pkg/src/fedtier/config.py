"""Experiment configuration. The JSON config file maps onto these models
one-to-one; unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigError


class TrainSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(0.01, ge=0)
    momentum: float = Field(0.5, ge=0)
    batch_size: int = Field(64, ge=1)
    local_epochs: int = Field(1, ge=1)


class Thresholds(BaseModel):
    model_config = ConfigDict(extra="forbid")

    match: float = Field(0.5, ge=0, le=1)
    merge: float = Field(0.9, ge=0, le=1)
    consolidation_period: int = Field(5, ge=0)  # 0 disables consolidation


class CustomClient(BaseModel):
    model_config = ConfigDict(extra="forbid")

    labels: list[int] = Field(min_length=1)
    max_per_label: Optional[int] = Field(None, ge=1)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    topology: Literal["standard", "three_tier"]
    scenario: Union[Literal["s1", "s2"], list[CustomClient]]
    rounds: int = Field(10, ge=1)
    train: TrainSettings = TrainSettings()
    thresholds: Thresholds = Thresholds()
    seed: int = Field(0, ge=0, lt=1 << 64)
    edges: int = Field(1, ge=1)
    client_edge_map: Optional[list[int]] = None
    sparse_per_label: int = Field(250, ge=1)

    def scenario_name(self) -> str:
        return self.scenario if isinstance(self.scenario, str) else "custom"


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON experiment config."""
    path = Path(path)
    try:
        raw = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    try:
        return ExperimentConfig.model_validate(payload)
    except ValidationError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
