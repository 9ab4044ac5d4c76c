"""Deterministic random number plumbing.

Two generators are used, both documented so replays are reproducible:

* numpy's Philox4x32-10 counter-based bit generator, keyed with a 64-bit
  seed, drives weight initialization, mini-batch shuffling, and partition
  subsampling. Philox output is platform-independent.
* splitmix64 derives per-(client, round) training seeds from the master
  experiment seed, so client iteration order never affects results.
"""

import numpy as np

MASK64 = (1 << 64) - 1


def philox(seed: int) -> np.random.Generator:
    """Generator backed by Philox4x32-10, keyed with the 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=seed & MASK64))


def splitmix64(x: int) -> int:
    """One splitmix64 step (Steele et al. constants), pure 64-bit arithmetic."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return (x ^ (x >> 31)) & MASK64


def derive_seed(master: int, client_id: int, round_no: int) -> int:
    """Per-client, per-round seed: master XOR splitmix64(client_id << 32 | round)."""
    return (master ^ splitmix64(((client_id & 0xFFFFFFFF) << 32) | (round_no & 0xFFFFFFFF))) & MASK64
