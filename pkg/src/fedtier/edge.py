"""Edge tier: serves client model requests from a local cache, escalates
misses to the fedge, and pre-aggregates client updates per model before
forwarding them upward (two-stage FedAvg).
"""

from __future__ import annotations

from dataclasses import dataclass

from .aggregation import fedavg
from .errors import ProtocolError
from .nn import ModelParams
from .protocol import (
    DataProfile,
    ModelDescriptor,
    ModelRequest,
    ModelResponse,
    ModelUpdate,
    merge_profiles,
    profile_similarity,
)

DEFAULT_MATCH_THRESHOLD = 0.5


@dataclass
class ForwardedAggregate:
    """One edge-level aggregate pushed to the fedge at round flush."""

    model_id: int
    params: ModelParams
    weight: float
    profile: DataProfile


class EdgeNode:
    """Single-owner mutable coordinator; the reference mode is sequential."""

    def __init__(self, edge_id: int, match_threshold: float = DEFAULT_MATCH_THRESHOLD):
        self.edge_id = edge_id
        self.match_threshold = match_threshold
        self.cache: dict[int, tuple[ModelDescriptor, ModelParams]] = {}
        self.pending: dict[int, list[ModelUpdate]] = {}
        self.fedge_fetches = 0  # cumulative cache misses escalated to the fedge

    def handle_model_request(self, req: ModelRequest, fedge) -> ModelResponse:
        """Serve the best cached match at or above the threshold, else ask the fedge."""
        best_id = None
        best_sim = -1.0
        for model_id in sorted(self.cache):
            sim = profile_similarity(self.cache[model_id][0].profile, req.profile)
            if sim >= self.match_threshold and sim > best_sim:
                best_id, best_sim = model_id, sim
        if best_id is not None:
            descriptor, params = self.cache[best_id]
            return ModelResponse(best_id, params, descriptor.version, freshly_created=False)
        response = fedge.find_or_create(req.profile)
        self.fedge_fetches += 1
        self.cache[response.model_id] = (fedge.get_descriptor(response.model_id), response.params)
        return response

    def handle_update(self, update: ModelUpdate) -> None:
        """Queue a client update for the round flush; the model must be cached."""
        if update.model_id not in self.cache:
            raise ProtocolError(
                f"edge {self.edge_id}: update for unknown model {update.model_id}"
            )
        self.pending.setdefault(update.model_id, []).append(update)

    def flush_round(self, fedge, round_no: int) -> list[ForwardedAggregate]:
        """FedAvg each pending group and forward it; clears the pending map.

        The forwarded weight is the summed sample count, the forwarded
        profile the sample-weighted merge of the contributors' profiles.
        """
        forwarded = []
        for model_id in sorted(self.pending):
            group = self.pending[model_id]
            params = fedavg([(u.params, float(u.sample_count)) for u in group])
            profile = group[0].profile
            weight = float(group[0].sample_count)
            for update in group[1:]:
                profile = merge_profiles(profile, weight, update.profile, float(update.sample_count))
                weight += float(update.sample_count)
            aggregate = ForwardedAggregate(model_id, params, weight, profile)
            fedge.apply_edge_aggregate(model_id, params, weight, profile, round_no)
            forwarded.append(aggregate)
        self.pending = {}
        return forwarded

    def drop_models(self, model_ids) -> None:
        """Forget merged-away models (consolidation fallout)."""
        for model_id in model_ids:
            self.cache.pop(model_id, None)
            self.pending.pop(model_id, None)

    def refresh_cache(self, fedge, model_ids) -> list[int]:
        """Re-read the given models from the registry; returns the ids refreshed.

        Cached versions only ever move forward.
        """
        refreshed = []
        for model_id in sorted(model_ids):
            if model_id not in self.cache:
                continue
            descriptor = fedge.get_descriptor(model_id)
            if descriptor.version >= self.cache[model_id][0].version:
                self.cache[model_id] = (descriptor, fedge.get_params(model_id))
                refreshed.append(model_id)
        return refreshed
