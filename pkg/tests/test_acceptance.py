"""Acceptance suite. Each criterion runs at its stated tolerance and prints
one PASS/FAIL line (run with `pytest -s tests/test_acceptance.py` to see
them). Criteria 1-7 are the fast property checks; 8-11 run the full-MNIST
experiments and are marked slow.
"""

import struct

import numpy as np
import pytest

from helpers import finite_difference_grads, naive_weighted_mean, write_idx_pair

from fedtier.aggregation import fedavg
from fedtier.config import ExperimentConfig, Thresholds, TrainSettings
from fedtier.data import LabeledSet, load_idx, partition_scenario2
from fedtier.engine import (
    metrics_to_records,
    replay_check,
    run_standard_fl,
    run_three_tier,
)
from fedtier.errors import CodecTruncatedError, CodecVersionError, IdxBadMagicError
from fedtier.fedge import FedgeNode
from fedtier.nn import SIMPLE_CNN, ModelParams, init_params, loss_and_gradients, tiny_arch
from fedtier.protocol import decode_params, encode_params, profile_of
from fedtier.rng import philox

MASTER_SEED = 11


def report(number: int, description: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    print(f"\n[{status}] criterion {number}: {description}" + (f" ({detail})" if detail else ""))
    assert passed, f"criterion {number} failed: {detail}"


def subset(dataset: LabeledSet, n: int) -> LabeledSet:
    return LabeledSet(dataset.images[:n], dataset.labels[:n])


# ---------------------------------------------------------------------------
# Fast property criteria
# ---------------------------------------------------------------------------

def test_criterion_1_gradient_oracle():
    arch = tiny_arch()
    worst = 0.0
    for seed in range(5):
        gen = philox(1000 + seed)
        batch = gen.normal(size=(3, 1, 28, 28))
        labels = gen.integers(0, 10, size=3).astype(np.int64)
        params = init_params(arch, seed)
        _, grads = loss_and_gradients(params, batch, labels, arch)
        oracle = finite_difference_grads(params, batch, labels, arch)
        for (_, g), (_, fd) in zip(grads.entries, oracle.entries):
            denom = np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-8)
            worst = max(worst, float((np.abs(g - fd) / denom).max()))
    report(1, "analytic gradients match central finite differences",
           worst < 1e-4, f"worst relative error {worst:.2e} over 5 seeds")


def test_criterion_2_aggregation_oracle():
    sets = [init_params(tiny_arch(), s) for s in (1, 2, 3)]
    updates = list(zip(sets, (1.0, 2.0, 3.0)))
    fast = fedavg(updates)
    slow = naive_weighted_mean(updates)
    oracle_gap = max(float(np.abs(a - b).max())
                     for (_, a), (_, b) in zip(fast.entries, slow.entries))
    ok = oracle_gap <= 1e-12

    gen = philox(2024)
    for _ in range(100):
        k = int(gen.integers(2, 5))
        weights = [float(w) for w in gen.uniform(0.1, 50.0, size=k)]
        case_sets = [init_params(tiny_arch(), int(gen.integers(0, 1 << 32))) for _ in range(k)]
        case = list(zip(case_sets, weights))
        mean = fedavg(case)
        scaled = fedavg([(p, w * 13.0) for p, w in case])
        for ti, (_, tensor) in enumerate(mean.entries):
            stack = np.stack([p.entries[ti][1] for p in case_sets])
            ok = ok and bool(np.all(tensor >= stack.min(axis=0) - 1e-12))
            ok = ok and bool(np.all(tensor <= stack.max(axis=0) + 1e-12))
            ok = ok and float(np.abs(tensor - scaled.entries[ti][1]).max()) <= 1e-12
        if not ok:
            break
    report(2, "fedavg matches the elementwise oracle; convex and scale-invariant",
           ok, f"oracle gap {oracle_gap:.2e}, 100 random cases")


def test_criterion_3_codec(tmp_path):
    ok = True
    for seed in range(20):
        params = init_params(SIMPLE_CNN, seed)
        decoded = decode_params(encode_params(params), SIMPLE_CNN)
        ok = ok and all(a.tobytes() == b.tobytes()
                        for (_, a), (_, b) in zip(params.entries, decoded.entries))
    blob = encode_params(init_params(SIMPLE_CNN, 0))
    try:
        decode_params(blob[: len(blob) // 2], SIMPLE_CNN)
        ok = False
    except CodecTruncatedError:
        pass
    mangled = bytearray(blob)
    mangled[0] ^= 0xFF
    try:
        decode_params(bytes(mangled), SIMPLE_CNN)
        ok = False
    except CodecVersionError:
        pass
    # bad magic on the dataset side of the wire surface
    img, lbl = write_idx_pair(tmp_path, np.zeros((1, 28, 28), dtype=np.uint8),
                              np.zeros(1, dtype=np.uint8), "imgs", "lbls")
    wrong = tmp_path / "wrong_magic"
    wrong.write_bytes(struct.pack(">iiii", 0x12345678, 1, 28, 28) + bytes(28 * 28))
    try:
        load_idx(wrong, lbl)
        ok = False
    except IdxBadMagicError:
        pass
    report(3, "codec round-trips bit-identically; truncation/bad-magic rejected",
           ok, "20 seeded parameter sets")


@pytest.mark.mnist
def test_criterion_4_topology_equivalence(mnist):
    train, test = mnist
    sub_train, sub_test = subset(train, 600), subset(test, 600)
    thresholds = Thresholds(match=0.0, merge=0.9, consolidation_period=0)
    common = dict(scenario="s1", rounds=3, seed=MASTER_SEED, thresholds=thresholds,
                  train=TrainSettings(batch_size=32))
    std, tt = {}, {}
    run_standard_fl(ExperimentConfig(topology="standard", **common), sub_train, sub_test,
                    param_probe=lambda r, p: std.__setitem__(r, p[0]))
    run_three_tier(ExperimentConfig(topology="three_tier", **common), sub_train, sub_test,
                   param_probe=lambda r, p: tt.__setitem__(r, p[0]))
    gap = 0.0
    for round_no in std:
        for (_, a), (_, b) in zip(std[round_no].entries, tt[round_no].entries):
            gap = max(gap, float(np.abs(a - b).max()))
    report(4, "single-model three-tier equals standard FL per round",
           gap <= 1e-10, f"max param gap {gap:.2e} over 3 rounds, 600 images")


@pytest.mark.mnist
def test_criterion_5_determinism(mnist):
    train, test = mnist
    sub_train, sub_test = subset(train, 300), subset(test, 300)
    ok = True
    for topology in ("standard", "three_tier"):
        for scenario in ("s1", "s2"):
            cfg = ExperimentConfig(topology=topology, scenario=scenario, rounds=2,
                                   seed=MASTER_SEED, sparse_per_label=3,
                                   train=TrainSettings(batch_size=32))
            ok = ok and replay_check(cfg, sub_train, sub_test)
    report(5, "replay_check true for both topologies and both scenarios",
           ok, "300-image subsets")


@pytest.mark.mnist
def test_criterion_6_registry_dynamics(mnist):
    train, test = mnist
    # scenario 2 with default sparse size on a subset that still covers it
    sub_train, sub_test = subset(train, 4000), subset(test, 1000)
    cfg = ExperimentConfig(topology="three_tier", scenario="s2", rounds=10,
                           seed=MASTER_SEED)
    metrics, _ = run_three_tier(cfg, sub_train, sub_test)
    sizes = [m.registry_size for m in metrics]
    two_models = sizes == [2] * 10

    # identical-profile duplicates consolidate to the exact weighted mean
    clients = partition_scenario2(sub_train, seed=MASTER_SEED)
    profile = profile_of(clients[1])
    fedge = FedgeNode(tiny_arch(), match_threshold=1.1, consolidation_period=1)
    a = fedge.find_or_create(profile).model_id
    b = fedge.find_or_create(profile).model_id
    base = init_params(tiny_arch(), 0)
    zeros = ModelParams([(n, np.zeros_like(t)) for n, t in base.entries])
    fours = ModelParams([(n, np.full_like(t, 4.0)) for n, t in base.entries])
    fedge.apply_edge_aggregate(a, zeros, 1.0, profile, round_no=1)
    fedge.apply_edge_aggregate(b, fours, 3.0, profile, round_no=1)
    fedge.consolidate(1)
    merged_ok = fedge.registry_size() == 1 and all(
        np.allclose(t, 3.0, atol=1e-15) for _, t in fedge.get_params(a).entries
    )
    report(6, "scenario-2 registry holds 2 models; duplicates merge to weighted mean",
           two_models and merged_ok, f"registry sizes {sizes}")


def test_criterion_7_communication_accounting():
    gen = philox(55)
    images = gen.normal(size=(80, 1, 28, 28))
    labels = np.repeat(np.arange(10), 8).astype(np.int64)[gen.permutation(80)]
    train = LabeledSet(images, labels)
    test = LabeledSet(images[:40], labels[:40])
    payload = len(encode_params(init_params(SIMPLE_CNN, MASTER_SEED)))  # via the codec

    cfg = ExperimentConfig(topology="standard", scenario="s1", rounds=3, seed=MASTER_SEED,
                           train=TrainSettings(batch_size=16))
    std = run_standard_fl(cfg, train, test)
    # standard: one broadcast down and one update up per client per round
    std_ok = all(m.bytes_down == 3 * payload and m.bytes_up == 3 * payload for m in std)

    cfg3 = ExperimentConfig(topology="three_tier", scenario="s2", rounds=3,
                            seed=MASTER_SEED, sparse_per_label=4,
                            train=TrainSettings(batch_size=16))
    tt, _ = run_three_tier(cfg3, train, test)
    # 2 clients, 1 edge, 2 models. Round 1: each request misses the edge cache
    # (fedge->edge + edge->client) and each flushed model is re-read after the
    # flush; later rounds hit the cache.
    expected = [(6 * payload, 4 * payload), (4 * payload, 4 * payload),
                (4 * payload, 4 * payload)]
    tt_ok = [(m.bytes_down, m.bytes_up) for m in tt] == expected
    report(7, "reported bytes equal messages times the encoded payload size",
           std_ok and tt_ok, f"payload {payload} bytes")


# ---------------------------------------------------------------------------
# Full-MNIST quantitative criteria
# ---------------------------------------------------------------------------

def _run_full(mnist, topology: str, scenario: str) -> list[dict]:
    cfg = ExperimentConfig(topology=topology, scenario=scenario, rounds=10, seed=MASTER_SEED)
    if topology == "standard":
        return metrics_to_records(run_standard_fl(cfg, *mnist))
    metrics, _ = run_three_tier(cfg, *mnist)
    return metrics_to_records(metrics)


@pytest.fixture(scope="module")
def s1_standard(mnist):
    return _run_full(mnist, "standard", "s1")


@pytest.fixture(scope="module")
def s1_three_tier(mnist):
    return _run_full(mnist, "three_tier", "s1")


@pytest.fixture(scope="module")
def s2_standard(mnist):
    return _run_full(mnist, "standard", "s2")


@pytest.fixture(scope="module")
def s2_three_tier(mnist):
    return _run_full(mnist, "three_tier", "s2")


def finals(records: list[dict]) -> dict[int, float]:
    last = max(r["round"] for r in records)
    return {r["client_id"]: r["accuracy"] for r in records if r["round"] == last}


def at_round(records: list[dict], round_no: int) -> dict[int, float]:
    return {r["client_id"]: r["accuracy"] for r in records if r["round"] == round_no}


@pytest.mark.mnist
@pytest.mark.slow
def test_criterion_8_s1_standard_finals(s1_standard):
    acc = finals(s1_standard)
    report(8, "scenario 1 standard FL: all final accuracies >= 97%",
           all(a >= 0.97 for a in acc.values()),
           " ".join(f"c{c}={a:.4f}" for c, a in sorted(acc.items())))


@pytest.mark.mnist
@pytest.mark.slow
def test_criterion_9_s1_three_tier_trajectory(s1_three_tier):
    round2 = at_round(s1_three_tier, 2)
    final = finals(s1_three_tier)
    passed = all(a >= 0.97 for a in round2.values()) and all(a >= 0.985 for a in final.values())
    report(9, "scenario 1 three-tier: >= 97% by round 2 and >= 98.5% final", passed,
           "r2 " + " ".join(f"c{c}={a:.4f}" for c, a in sorted(round2.items()))
           + " | final " + " ".join(f"c{c}={a:.4f}" for c, a in sorted(final.items())))


@pytest.mark.mnist
@pytest.mark.slow
def test_criterion_10_s2_standard_finals(s2_standard):
    acc = finals(s2_standard)
    passed = acc[0] >= 0.99 and 0.55 <= acc[1] <= 0.88
    report(10, "scenario 2 standard FL: client 1 >= 99%, client 2 in [55%, 88%]",
           passed, f"c0={acc[0]:.4f} c1={acc[1]:.4f}")


@pytest.mark.mnist
@pytest.mark.slow
def test_criterion_11_s2_three_tier_gap(s2_standard, s2_three_tier):
    std = finals(s2_standard)
    tt = finals(s2_three_tier)
    gap = tt[1] - std[1]
    passed = tt[0] >= 0.995 and gap >= 0.05
    report(11, "scenario 2 three-tier: client 1 >= 99.5%, client 2 beats standard by >= 5pts",
           passed, f"c0={tt[0]:.4f} c1={tt[1]:.4f} vs standard c1={std[1]:.4f} (gap {gap:+.4f})")
