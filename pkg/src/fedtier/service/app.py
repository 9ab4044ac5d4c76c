"""FastAPI application. Stateless: every run request carries its full
experiment config, so responses are reproducible; loaded MNIST data is
cached per directory within the process.
"""

from __future__ import annotations

import os
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from ..config import ExperimentConfig
from ..data import LabeledSet, load_mnist_dir
from ..engine import metrics_to_records, replay_check, run_standard_fl, run_three_tier
from ..errors import ConfigError, DataError, FedTierError
from ..nn import SIMPLE_CNN
from ..protocol import encoded_size
from ..reporting import compare_finals
from .schemas import (
    CompareRequest,
    CompareResponse,
    CompareRow,
    HealthResponse,
    MetricRecord,
    RegistryEntry,
    ReplayCheckResponse,
    RunRequest,
    RunResponse,
    ScenarioInfo,
    ScenariosResponse,
)

MNIST_DIR_ENV = "FEDTIER_MNIST_DIR"

SCENARIOS = [
    ScenarioInfo(name="s1", description="three clients over disjoint label groups "
                                        "{0,1,2} / {3,4,5} / {6,7,8,9}, equal sizes"),
    ScenarioInfo(name="s2", description="two clients: all of labels {0,1} vs a sparse "
                                        "sample of labels {2..9}"),
    ScenarioInfo(name="custom", description="explicit per-client label sets, passed as a "
                                            "list of {labels, max_per_label} objects"),
]


def _error_response(status: int, kind: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": {"kind": kind, "detail": detail}})


def create_app() -> FastAPI:
    app = FastAPI(title="fedtier", version="0.1.0",
                  description="Deterministic federated-learning experiment service")
    data_cache: dict[str, tuple[LabeledSet, LabeledSet]] = {}

    def load_data(request: RunRequest) -> tuple[LabeledSet, LabeledSet]:
        directory = request.mnist_dir or os.environ.get(MNIST_DIR_ENV)
        if not directory:
            raise DataError(
                f"no MNIST directory: set {MNIST_DIR_ENV} or pass mnist_dir in the request"
            )
        key = str(Path(directory).resolve())
        if key not in data_cache:
            data_cache[key] = load_mnist_dir(directory)
        return data_cache[key]

    def effective_config(request: RunRequest) -> ExperimentConfig:
        cfg = request.experiment
        if request.seed is not None:
            cfg = cfg.model_copy(update={"seed": request.seed})
        return cfg

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(_: Request, exc: RequestValidationError):
        return _error_response(422, "config", str(exc))

    @app.exception_handler(ConfigError)
    async def on_config_error(_: Request, exc: ConfigError):
        return _error_response(400, "config", str(exc))

    @app.exception_handler(DataError)
    async def on_data_error(_: Request, exc: DataError):
        return _error_response(404, "data", str(exc))

    @app.exception_handler(FedTierError)
    async def on_runtime_error(_: Request, exc: FedTierError):
        return _error_response(500, "runtime", str(exc))

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse()

    @app.get("/scenarios", response_model=ScenariosResponse)
    def scenarios() -> ScenariosResponse:
        return ScenariosResponse(scenarios=SCENARIOS)

    @app.post("/experiments/run", response_model=RunResponse)
    def run(request: RunRequest) -> RunResponse:
        cfg = effective_config(request)
        train, test = load_data(request)
        registry: list[RegistryEntry] = []
        if cfg.topology == "standard":
            metrics = run_standard_fl(cfg, train, test)
        else:
            metrics, fedge = run_three_tier(cfg, train, test)
            for model_id in sorted(fedge.registry):
                descriptor, _ = fedge.registry[model_id]
                registry.append(RegistryEntry(
                    model_id=model_id,
                    version=descriptor.version,
                    label_hist=list(descriptor.profile.label_hist),
                    sample_count=descriptor.profile.sample_count,
                    cumulative_weight=descriptor.cumulative_weight,
                ))
        return RunResponse(
            topology=cfg.topology,
            scenario=cfg.scenario_name(),
            rounds=cfg.rounds,
            seed=cfg.seed,
            payload_bytes=encoded_size(SIMPLE_CNN),
            metrics=[MetricRecord(**rec) for rec in metrics_to_records(metrics)],
            registry=registry,
        )

    @app.post("/experiments/replay-check", response_model=ReplayCheckResponse)
    def replay(request: RunRequest) -> ReplayCheckResponse:
        cfg = effective_config(request)
        train, test = load_data(request)
        return ReplayCheckResponse(deterministic=replay_check(cfg, train, test))

    @app.post("/compare", response_model=CompareResponse)
    def compare(request: CompareRequest) -> CompareResponse:
        rows = compare_finals(
            [rec.model_dump() for rec in request.a],
            [rec.model_dump() for rec in request.b],
        )
        return CompareResponse(rows=[CompareRow(**row) for row in rows])

    return app
