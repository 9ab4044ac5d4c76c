"""Pydantic request/response models for the experiment service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from ..config import ExperimentConfig


class HealthResponse(BaseModel):
    status: str = "ok"


class ScenarioInfo(BaseModel):
    name: str
    description: str


class ScenariosResponse(BaseModel):
    scenarios: list[ScenarioInfo]


class RunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentConfig
    mnist_dir: Optional[str] = Field(
        None, description="Directory with the MNIST IDX files; defaults to $FEDTIER_MNIST_DIR"
    )
    seed: Optional[int] = Field(None, ge=0, lt=1 << 64, description="Overrides experiment.seed")


class MetricRecord(BaseModel):
    round: int
    client_id: int
    model_id: int
    accuracy: float
    bytes_down: int
    bytes_up: int
    registry_size: int


class RegistryEntry(BaseModel):
    model_id: int
    version: int
    label_hist: list[float]
    sample_count: int
    cumulative_weight: float


class RunResponse(BaseModel):
    topology: str
    scenario: str
    rounds: int
    seed: int
    payload_bytes: int
    metrics: list[MetricRecord]
    registry: list[RegistryEntry]


class ReplayCheckResponse(BaseModel):
    deterministic: bool


class CompareRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    a: list[MetricRecord]
    b: list[MetricRecord]


class CompareRow(BaseModel):
    client_id: int
    final_a: float
    final_b: float
    difference: float


class CompareResponse(BaseModel):
    rows: list[CompareRow]


class ErrorDetail(BaseModel):
    kind: str  # "config" | "data" | "runtime"
    detail: str


class ErrorBody(BaseModel):
    error: ErrorDetail
