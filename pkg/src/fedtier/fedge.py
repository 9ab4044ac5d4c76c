"""Fedge tier: the registry of global models. Matches profiles to models,
creates new globals on miss, applies edge aggregates, and periodically
consolidates similar models into one.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .aggregation import fedavg, merge_models
from .errors import ProtocolError
from .nn import CnnArch, ModelParams, init_params
from .protocol import (
    DataProfile,
    ModelDescriptor,
    ModelResponse,
    encode_params,
    merge_profiles,
    profile_similarity,
)
from .rng import MASK64

DEFAULT_MERGE_THRESHOLD = 0.9
DEFAULT_CONSOLIDATION_PERIOD = 5


@dataclass
class MergeEvent:
    """Record of one consolidation merge (absorbed into kept)."""

    kept_id: int
    absorbed_id: int
    similarity: float
    new_version: int


class FedgeNode:
    """Single-owner mutable registry; all mutations are serialized."""

    def __init__(self, arch: CnnArch, match_threshold: float = 0.5,
                 merge_threshold: float = DEFAULT_MERGE_THRESHOLD,
                 consolidation_period: int = DEFAULT_CONSOLIDATION_PERIOD,
                 init_seed_base: int = 0):
        self.arch = arch
        self.match_threshold = match_threshold
        self.merge_threshold = merge_threshold
        self.consolidation_period = consolidation_period
        self.init_seed_base = init_seed_base
        self.registry: dict[int, tuple[ModelDescriptor, ModelParams]] = {}
        self.next_id = 0
        # Edge contributions inside the current round, per model; a new round
        # number resets them. Model ids are never reused.
        self._contributions: dict[int, list[tuple[ModelParams, float]]] = {}
        self._contribution_round: int | None = None

    def registry_size(self) -> int:
        return len(self.registry)

    def get_descriptor(self, model_id: int) -> ModelDescriptor:
        if model_id not in self.registry:
            raise ProtocolError(f"unknown model {model_id}")
        return copy.deepcopy(self.registry[model_id][0])

    def get_params(self, model_id: int) -> ModelParams:
        if model_id not in self.registry:
            raise ProtocolError(f"unknown model {model_id}")
        return self.registry[model_id][1]

    def find_or_create(self, profile: DataProfile) -> ModelResponse:
        """Best registry match at or above the threshold, else a fresh model.

        New models are initialized with seed init_seed_base + model_id and
        registered with the requesting profile at version 0.
        """
        best_id = None
        best_sim = -1.0
        for model_id in sorted(self.registry):
            sim = profile_similarity(self.registry[model_id][0].profile, profile)
            if sim >= self.match_threshold and sim > best_sim:
                best_id, best_sim = model_id, sim
        if best_id is not None:
            descriptor, params = self.registry[best_id]
            return ModelResponse(best_id, params, descriptor.version, freshly_created=False)
        model_id = self.next_id
        self.next_id += 1
        params = init_params(self.arch, (self.init_seed_base + model_id) & MASK64)
        descriptor = ModelDescriptor(model_id, version=0, profile=profile, cumulative_weight=0.0)
        self.registry[model_id] = (descriptor, params)
        return ModelResponse(model_id, params, 0, freshly_created=True)

    def apply_edge_aggregate(self, model_id: int, params: ModelParams, weight: float,
                             profile: DataProfile, round_no: int) -> int:
        """Fold one edge aggregate into the model; returns the new version.

        Several edges may contribute to the same model within a round; the
        registry params are the sample-weighted FedAvg over this round's
        contributions, recomputed on each call. A single contributor
        therefore replaces the params bitwise.
        """
        if model_id not in self.registry:
            raise ProtocolError(f"unknown model {model_id}")
        if round_no != self._contribution_round:
            self._contributions = {}
            self._contribution_round = round_no
        contributions = self._contributions.setdefault(model_id, [])
        contributions.append((params, weight))
        new_params = fedavg(contributions)
        descriptor, _ = self.registry[model_id]
        if descriptor.cumulative_weight > 0:
            descriptor.profile = merge_profiles(
                descriptor.profile, descriptor.cumulative_weight, profile, weight
            )
        else:
            # First training contribution: the creation-time profile carried
            # zero weight, so the incoming profile takes over wholesale.
            descriptor.profile = profile
        descriptor.cumulative_weight += weight
        descriptor.version += 1
        self.registry[model_id] = (descriptor, new_params)
        return descriptor.version

    def consolidate(self, round_no: int) -> list[MergeEvent]:
        """Greedy merge pass over the registry when the round is due.

        Repeatedly merges the most similar pair at or above the merge
        threshold (ties broken toward the lowest id pair); the lower id
        survives with the weighted-mean params and the combined weight.
        """
        if self.consolidation_period <= 0:
            return []
        if round_no <= 0 or round_no % self.consolidation_period != 0:
            return []
        events: list[MergeEvent] = []
        while True:
            best_pair = None
            best_sim = -1.0
            ids = sorted(self.registry)
            for i, id_a in enumerate(ids):
                if self.registry[id_a][0].cumulative_weight <= 0:
                    continue
                for id_b in ids[i + 1:]:
                    if self.registry[id_b][0].cumulative_weight <= 0:
                        continue
                    sim = profile_similarity(
                        self.registry[id_a][0].profile, self.registry[id_b][0].profile
                    )
                    if sim > best_sim:
                        best_pair, best_sim = (id_a, id_b), sim
            if best_pair is None or best_sim < self.merge_threshold:
                break
            id_a, id_b = best_pair
            desc_a, params_a = self.registry[id_a]
            desc_b, params_b = self.registry[id_b]
            wa, wb = desc_a.cumulative_weight, desc_b.cumulative_weight
            merged = ModelDescriptor(
                model_id=id_a,
                version=max(desc_a.version, desc_b.version) + 1,
                profile=merge_profiles(desc_a.profile, wa, desc_b.profile, wb),
                cumulative_weight=wa + wb,
            )
            self.registry[id_a] = (merged, merge_models(params_a, wa, params_b, wb))
            del self.registry[id_b]
            events.append(MergeEvent(id_a, id_b, best_sim, merged.version))
        return events

    def export_registry(self, directory) -> Path:
        """Write one wire-format file per model plus a JSON index; returns the index path."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        index = []
        for model_id in sorted(self.registry):
            descriptor, params = self.registry[model_id]
            (directory / f"model_{model_id}.params").write_bytes(encode_params(params))
            index.append({
                "model_id": model_id,
                "version": descriptor.version,
                "profile": {
                    "label_hist": list(descriptor.profile.label_hist),
                    "sample_count": descriptor.profile.sample_count,
                },
                "cumulative_weight": descriptor.cumulative_weight,
            })
        index_path = directory / "index.json"
        index_path.write_text(json.dumps(index, indent=2) + "\n")
        return index_path
