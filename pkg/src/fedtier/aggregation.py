"""Weighted parameter averaging: the FedAvg step and the global-model merge
share this kernel. Accumulation follows list order so results are
deterministic; cross-order equality only holds within tolerance.
"""

from __future__ import annotations

from .errors import AggregationError
from .nn import ModelParams


def fedavg(updates: list[tuple[ModelParams, float]]) -> ModelParams:
    """Elementwise weighted mean of parameter sets.

    A single update is returned bit-identically (no arithmetic applied).
    """
    if not updates:
        raise AggregationError("fedavg needs at least one update")
    for _, weight in updates:
        if not weight > 0:
            raise AggregationError(f"weights must be positive, got {weight}")
    base, _ = updates[0]
    for params, _ in updates[1:]:
        if params.layout() != base.layout():
            raise AggregationError("parameter layouts differ across updates")
    if len(updates) == 1:
        return base.copy()
    total = sum(weight for _, weight in updates)
    first_w = updates[0][1]
    acc = [(name, first_w * tensor) for name, tensor in base.entries]
    for params, weight in updates[1:]:
        for i, (_, tensor) in enumerate(params.entries):
            acc[i] = (acc[i][0], acc[i][1] + weight * tensor)
    return ModelParams([(name, tensor / total) for name, tensor in acc])


def merge_models(a: ModelParams, wa: float, b: ModelParams, wb: float) -> ModelParams:
    """Two-way weighted mean; same semantics as fedavg on two entries."""
    return fedavg([(a, wa), (b, wb)])
