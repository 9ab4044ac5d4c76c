"""Deterministic round orchestration for both topologies.

Rounds are synchronous with full participation. Clients are processed in
ascending client id and edges flushed in ascending edge id; per-client
training seeds are derived from the master seed and (client, round), so
iteration order can never leak into results.

Per-client accuracy is measured on the model the client holds right after
its local training for the round, against the test images of its own
training labels. (Scoring the post-aggregation model instead collapses
early-round accuracy under label-disjoint clients and never reaches the
reference trajectories; for three-tier runs the two views coincide whenever
a model has a single contributor.)

Byte accounting counts every parameter payload crossing a tier boundary at
the wire-codec size:
  down: model responses to clients, fedge->edge fetches on cache misses,
        and post-flush cache refreshes of updated models;
  up:   client updates to edges and edge aggregates forwarded to the fedge.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Callable, Optional

from .config import ExperimentConfig
from .data import LabeledSet, partition_custom, partition_scenario1, partition_scenario2
from .data import ClientSpec, filter_test
from .edge import EdgeNode
from .errors import ConfigError
from .fedge import FedgeNode
from .nn import SIMPLE_CNN, ModelParams, TrainConfig, evaluate_accuracy, init_params, train_local
from .protocol import ModelRequest, ModelUpdate, encoded_size, profile_of
from .aggregation import fedavg
from .rng import derive_seed

logger = logging.getLogger(__name__)

ParamProbe = Callable[[int, dict[int, ModelParams]], None]


@dataclass
class RoundMetrics:
    """Per-round experiment record: accuracies and communication volume."""

    round_no: int
    per_client: list[tuple[int, int, float]]  # (client_id, model_id, accuracy)
    bytes_down: int
    bytes_up: int
    registry_size: int


def build_partitions(cfg: ExperimentConfig, train: LabeledSet) -> list[LabeledSet]:
    """Resolve the config's scenario into per-client training sets."""
    if cfg.scenario == "s1":
        return partition_scenario1(train, cfg.seed)
    if cfg.scenario == "s2":
        return partition_scenario2(train, cfg.sparse_per_label, cfg.seed)
    spec = [ClientSpec(frozenset(c.labels), c.max_per_label) for c in cfg.scenario]
    return partition_custom(train, spec, cfg.seed)


def _edge_assignment(cfg: ExperimentConfig, num_clients: int) -> list[int]:
    if cfg.client_edge_map is None:
        return [i % cfg.edges for i in range(num_clients)]
    if len(cfg.client_edge_map) != num_clients:
        raise ConfigError(
            f"client_edge_map has {len(cfg.client_edge_map)} entries for {num_clients} clients"
        )
    if any(e < 0 or e >= cfg.edges for e in cfg.client_edge_map):
        raise ConfigError("client_edge_map references a nonexistent edge")
    return list(cfg.client_edge_map)


def _client_train_config(cfg: ExperimentConfig, client_id: int, round_no: int) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg.train.learning_rate,
        momentum=cfg.train.momentum,
        batch_size=cfg.train.batch_size,
        local_epochs=cfg.train.local_epochs,
        seed=derive_seed(cfg.seed, client_id, round_no),
    )


def _eval_sets(clients: list[LabeledSet], test: LabeledSet) -> list[LabeledSet]:
    # Each client is scored on the test images of its own training labels.
    return [filter_test(test, ds.label_set()) for ds in clients]


def run_standard_fl(cfg: ExperimentConfig, train: LabeledSet, test: LabeledSet,
                    param_probe: Optional[ParamProbe] = None) -> list[RoundMetrics]:
    """Classic client-server FedAvg over the configured scenario."""
    clients = build_partitions(cfg, train)
    eval_sets = _eval_sets(clients, test)
    payload = encoded_size(SIMPLE_CNN)
    global_params = init_params(SIMPLE_CNN, cfg.seed)
    metrics = []
    for round_no in range(1, cfg.rounds + 1):
        updates = []
        for client_id, dataset in enumerate(clients):
            trained, count = train_local(
                global_params, dataset, _client_train_config(cfg, client_id, round_no)
            )
            updates.append((trained, float(count)))
        global_params = fedavg(updates)
        per_client = [
            (client_id, 0, evaluate_accuracy(updates[client_id][0], eval_sets[client_id]))
            for client_id in range(len(clients))
        ]
        metrics.append(RoundMetrics(
            round_no=round_no,
            per_client=per_client,
            bytes_down=len(clients) * payload,
            bytes_up=len(clients) * payload,
            registry_size=1,
        ))
        if param_probe is not None:
            param_probe(round_no, {0: global_params})
        logger.info("standard round %d: %s", round_no,
                    " ".join(f"c{c}={a:.4f}" for c, _, a in per_client))
    return metrics


def run_three_tier(cfg: ExperimentConfig, train: LabeledSet, test: LabeledSet,
                   param_probe: Optional[ParamProbe] = None,
                   registry_export_dir=None) -> tuple[list[RoundMetrics], FedgeNode]:
    """Client/edge/fedge rounds with the multi-global-model registry.

    Returns the metrics stream and the final fedge node (whose registry the
    caller may snapshot or inspect).
    """
    clients = build_partitions(cfg, train)
    eval_sets = _eval_sets(clients, test)
    profiles = [profile_of(ds) for ds in clients]
    assignment = _edge_assignment(cfg, len(clients))
    payload = encoded_size(SIMPLE_CNN)

    edges = [EdgeNode(e, match_threshold=cfg.thresholds.match) for e in range(cfg.edges)]
    fedge = FedgeNode(
        SIMPLE_CNN,
        match_threshold=cfg.thresholds.match,
        merge_threshold=cfg.thresholds.merge,
        consolidation_period=cfg.thresholds.consolidation_period,
        init_seed_base=cfg.seed,
    )
    alias: dict[int, int] = {}

    def resolve(model_id: int) -> int:
        while model_id in alias:
            model_id = alias[model_id]
        return model_id

    metrics = []
    for round_no in range(1, cfg.rounds + 1):
        bytes_down = 0
        bytes_up = 0
        assigned: list[int] = []
        trained_by_client: list[ModelParams] = []
        for client_id, dataset in enumerate(clients):
            edge = edges[assignment[client_id]]
            fetches_before = edge.fedge_fetches
            response = edge.handle_model_request(
                ModelRequest(client_id, profiles[client_id], round_no), fedge
            )
            bytes_down += payload  # edge -> client
            bytes_down += (edge.fedge_fetches - fetches_before) * payload  # fedge -> edge
            assigned.append(response.model_id)
            trained, count = train_local(
                response.params, dataset, _client_train_config(cfg, client_id, round_no)
            )
            trained_by_client.append(trained)
            edge.handle_update(ModelUpdate(
                response.model_id, trained, count, profiles[client_id], client_id, round_no
            ))
            bytes_up += payload  # client -> edge

        updated: set[int] = set()
        for edge in edges:
            forwarded = edge.flush_round(fedge, round_no)
            bytes_up += len(forwarded) * payload  # edge -> fedge
            updated.update(f.model_id for f in forwarded)

        merge_events = fedge.consolidate(round_no)
        absorbed = {e.absorbed_id for e in merge_events}
        for event in merge_events:
            alias[event.absorbed_id] = event.kept_id
        refresh_ids = (updated | {e.kept_id for e in merge_events}) - absorbed
        for edge in edges:
            edge.drop_models(absorbed)
            refreshed = edge.refresh_cache(fedge, refresh_ids)
            bytes_down += len(refreshed) * payload  # fedge -> edge

        per_client = []
        for client_id in range(len(clients)):
            model_id = resolve(assigned[client_id])
            accuracy = evaluate_accuracy(trained_by_client[client_id], eval_sets[client_id])
            per_client.append((client_id, model_id, accuracy))
        metrics.append(RoundMetrics(
            round_no=round_no,
            per_client=per_client,
            bytes_down=bytes_down,
            bytes_up=bytes_up,
            registry_size=fedge.registry_size(),
        ))
        if param_probe is not None:
            param_probe(round_no, {mid: fedge.get_params(mid) for mid in sorted(fedge.registry)})
        logger.info("three-tier round %d: registry=%d %s", round_no, fedge.registry_size(),
                    " ".join(f"c{c}/m{m}={a:.4f}" for c, m, a in per_client))

    if registry_export_dir is not None:
        fedge.export_registry(registry_export_dir)
    return metrics, fedge


def run_experiment(cfg: ExperimentConfig, train: LabeledSet, test: LabeledSet) -> list[RoundMetrics]:
    """Dispatch on the configured topology; returns the metrics stream."""
    if cfg.topology == "standard":
        return run_standard_fl(cfg, train, test)
    metrics, _ = run_three_tier(cfg, train, test)
    return metrics


def metrics_to_records(metrics: list[RoundMetrics]) -> list[dict]:
    """Flatten round metrics to one record per (round, client)."""
    records = []
    for m in metrics:
        for client_id, model_id, accuracy in m.per_client:
            records.append({
                "round": m.round_no,
                "client_id": client_id,
                "model_id": model_id,
                "accuracy": accuracy,
                "bytes_down": m.bytes_down,
                "bytes_up": m.bytes_up,
                "registry_size": m.registry_size,
            })
    return records


def serialize_metrics(metrics: list[RoundMetrics]) -> bytes:
    """Canonical byte serialization used for replay comparison."""
    return json.dumps(metrics_to_records(metrics), sort_keys=True,
                      separators=(",", ":")).encode()


def replay_check(cfg: ExperimentConfig, train: LabeledSet, test: LabeledSet,
                 other: Optional[ExperimentConfig] = None) -> bool:
    """True iff two runs of the experiment serialize to identical bytes."""
    if other is None:
        other = cfg
    if other.topology != cfg.topology:
        raise ConfigError("replay_check requires both runs to use the same topology")
    first = serialize_metrics(run_experiment(cfg, train, test))
    second = serialize_metrics(run_experiment(other, train, test))
    return first == second
