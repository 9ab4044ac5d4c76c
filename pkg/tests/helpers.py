"""Shared test utilities: independent oracles and synthetic data builders."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from fedtier.data import LabeledSet
from fedtier.nn import CnnArch, ModelParams, loss_and_gradients
from fedtier.rng import philox


def finite_difference_grads(params: ModelParams, batch: np.ndarray, labels: np.ndarray,
                            arch: CnnArch, h: float = 1e-5) -> ModelParams:
    """Central-difference gradient of the loss over every parameter.

    Independent of the backprop path: only the forward loss is used.
    """
    out = []
    for name, tensor in params.entries:
        grad = np.zeros_like(tensor)
        flat = tensor.ravel()
        gflat = grad.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            loss_plus, _ = loss_and_gradients(params, batch, labels, arch)
            flat[i] = orig - h
            loss_minus, _ = loss_and_gradients(params, batch, labels, arch)
            flat[i] = orig
            gflat[i] = (loss_plus - loss_minus) / (2 * h)
        out.append((name, grad))
    return ModelParams(out)


def naive_weighted_mean(updates: list[tuple[ModelParams, float]]) -> ModelParams:
    """Brute-force elementwise loop; the aggregation oracle."""
    total = sum(w for _, w in updates)
    out = []
    for ti, (name, tensor) in enumerate(updates[0][0].entries):
        acc = np.zeros_like(tensor)
        flat_acc = acc.ravel()
        for params, weight in updates:
            flat = params.entries[ti][1].ravel()
            for i in range(flat.size):
                flat_acc[i] += weight * flat[i]
        for i in range(flat_acc.size):
            flat_acc[i] /= total
        out.append((name, acc))
    return ModelParams(out)


def write_idx_pair(directory: Path, images: np.ndarray, labels: np.ndarray,
                   images_name: str, labels_name: str) -> tuple[Path, Path]:
    """Write a uint8 image stack (N, 28, 28) and labels as IDX files."""
    n = images.shape[0]
    img_path = directory / images_name
    lbl_path = directory / labels_name
    with open(img_path, "wb") as fh:
        fh.write(struct.pack(">iiii", 0x00000803, n, 28, 28))
        fh.write(images.astype(np.uint8).tobytes())
    with open(lbl_path, "wb") as fh:
        fh.write(struct.pack(">ii", 0x00000801, n))
        fh.write(labels.astype(np.uint8).tobytes())
    return img_path, lbl_path


def synthetic_digits(per_label: int, seed: int = 0, noise: float = 0.2) -> LabeledSet:
    """Learnable synthetic set: one random prototype per label plus noise."""
    gen = philox(seed)
    prototypes = gen.normal(size=(10, 1, 28, 28))
    images = []
    labels = []
    for label in range(10):
        samples = prototypes[label] + noise * gen.normal(size=(per_label, 1, 28, 28))
        images.append(samples)
        labels.extend([label] * per_label)
    order = gen.permutation(10 * per_label)
    return LabeledSet(np.concatenate(images)[order], np.asarray(labels, dtype=np.int64)[order])


def indexed_set(labels: np.ndarray) -> LabeledSet:
    """LabeledSet whose images encode their own row index in pixel (0, 0).

    Lets partition tests recover which original rows a client received.
    """
    n = labels.shape[0]
    images = np.zeros((n, 1, 28, 28))
    images[:, 0, 0, 0] = np.arange(n, dtype=np.float64)
    return LabeledSet(images, np.asarray(labels, dtype=np.int64))


def recover_indices(subset: LabeledSet) -> list[int]:
    return [int(v) for v in subset.images[:, 0, 0, 0]]
