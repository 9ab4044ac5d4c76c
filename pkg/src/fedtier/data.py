"""MNIST loading and the two non-IID partitions.

IDX format (big endian):
  images: i32 magic 0x00000803 | i32 count | i32 rows | i32 cols | u8 pixels
  labels: i32 magic 0x00000801 | i32 count | u8 labels

Pixels are normalized as (pixel/255 - 0.1307) / 0.3081 at load time.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, IdxBadMagicError, IdxCountMismatchError, IdxTruncatedError
from .rng import philox

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
NORM_MEAN = 0.1307
NORM_STD = 0.3081

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"

SCENARIO1_LABEL_GROUPS = [frozenset({0, 1, 2}), frozenset({3, 4, 5}), frozenset({6, 7, 8, 9})]
SCENARIO2_BULK_LABELS = frozenset({0, 1})
SCENARIO2_SPARSE_LABELS = frozenset(range(2, 10))
DEFAULT_SPARSE_PER_LABEL = 250


@dataclass
class LabeledSet:
    """Normalized images (N, 1, 28, 28) float64 plus their labels (N,) int64."""

    images: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return self.labels.shape[0]

    def subset(self, indices: np.ndarray) -> "LabeledSet":
        return LabeledSet(self.images[indices], self.labels[indices])

    def label_set(self) -> set[int]:
        return {int(v) for v in np.unique(self.labels)}


@dataclass(frozen=True)
class ClientSpec:
    """One client of a custom partition: its labels and an optional per-label cap."""

    labels: frozenset[int]
    max_per_label: Optional[int] = None


def _read_file(path: Path) -> bytes:
    if path.exists():
        data = path.read_bytes()
    elif path.with_name(path.name + ".gz").exists():
        data = path.with_name(path.name + ".gz").read_bytes()
    else:
        raise DataError(f"no such file: {path}")
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def load_idx(images_path, labels_path) -> LabeledSet:
    """Load an MNIST-style IDX image/label file pair."""
    img_raw = _read_file(Path(images_path))
    lbl_raw = _read_file(Path(labels_path))

    if len(img_raw) < 16:
        raise IdxTruncatedError(f"image file shorter than its 16-byte header: {images_path}")
    magic, count, rows, cols = struct.unpack(">iiii", img_raw[:16])
    if magic != IMAGES_MAGIC:
        raise IdxBadMagicError(f"bad magic 0x{magic:08x} in image file {images_path}")
    if rows != 28 or cols != 28:
        raise DataError(f"expected 28x28 images, file declares {rows}x{cols}")
    if len(img_raw) - 16 < count * rows * cols:
        raise IdxTruncatedError(f"image file truncated: {images_path}")

    if len(lbl_raw) < 8:
        raise IdxTruncatedError(f"label file shorter than its 8-byte header: {labels_path}")
    lmagic, lcount = struct.unpack(">ii", lbl_raw[:8])
    if lmagic != LABELS_MAGIC:
        raise IdxBadMagicError(f"bad magic 0x{lmagic:08x} in label file {labels_path}")
    if len(lbl_raw) - 8 < lcount:
        raise IdxTruncatedError(f"label file truncated: {labels_path}")
    if count != lcount:
        raise IdxCountMismatchError(f"{count} images but {lcount} labels")

    pixels = np.frombuffer(img_raw, dtype=np.uint8, count=count * rows * cols, offset=16)
    images = (pixels.astype(np.float64) / 255.0 - NORM_MEAN) / NORM_STD
    labels = np.frombuffer(lbl_raw, dtype=np.uint8, count=count, offset=8).astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() > 9):
        raise DataError("labels outside [0, 9]")
    return LabeledSet(images.reshape(count, 1, rows, cols), labels)


def load_mnist_dir(directory) -> tuple[LabeledSet, LabeledSet]:
    """Load (train, test) from a directory holding the canonical MNIST files."""
    d = Path(directory)
    train = load_idx(d / TRAIN_IMAGES, d / TRAIN_LABELS)
    test = load_idx(d / TEST_IMAGES, d / TEST_LABELS)
    return train, test


def partition_scenario1(train: LabeledSet, seed: int) -> list[LabeledSet]:
    """Three clients over label groups {0,1,2} / {3,4,5} / {6,7,8,9}.

    Each client is subsampled (seeded, without replacement) to the size of
    the smallest group, so all three hold the same number of images.
    """
    if train.label_set() != set(range(10)):
        raise DataError("scenario 1 needs a training set covering all 10 labels")
    group_indices = [np.where(np.isin(train.labels, sorted(g)))[0] for g in SCENARIO1_LABEL_GROUPS]
    target = min(len(g) for g in group_indices)
    if target < 1:
        raise DataError("scenario 1: a label group has no samples")
    gen = philox(seed)
    clients = []
    for gidx in group_indices:
        chosen = gen.choice(len(gidx), size=target, replace=False)
        clients.append(train.subset(np.sort(gidx[chosen])))
    return clients


def partition_scenario2(train: LabeledSet, sparse_per_label: int = DEFAULT_SPARSE_PER_LABEL,
                        seed: int = 0) -> list[LabeledSet]:
    """Two clients: all images of labels {0,1} vs a sparse sample of {2..9}.

    Client 2 receives sparse_per_label seeded samples from each of the
    eight remaining labels.
    """
    if sparse_per_label < 1:
        raise DataError("sparse_per_label must be >= 1")
    bulk_idx = np.where(np.isin(train.labels, sorted(SCENARIO2_BULK_LABELS)))[0]
    if len(bulk_idx) == 0:
        raise DataError("scenario 2: no samples for labels {0, 1}")
    gen = philox(seed)
    sparse_parts = []
    for label in sorted(SCENARIO2_SPARSE_LABELS):
        pool = np.where(train.labels == label)[0]
        if len(pool) < sparse_per_label:
            raise DataError(
                f"scenario 2: label {label} has {len(pool)} samples, need {sparse_per_label}"
            )
        chosen = gen.choice(len(pool), size=sparse_per_label, replace=False)
        sparse_parts.append(pool[chosen])
    sparse_idx = np.sort(np.concatenate(sparse_parts))
    return [train.subset(bulk_idx), train.subset(sparse_idx)]


def partition_custom(train: LabeledSet, spec: Sequence[ClientSpec], seed: int) -> list[LabeledSet]:
    """Partition per an explicit client list; pools are drawn without overlap."""
    if not spec:
        raise DataError("custom partition needs at least one client")
    pools = {label: list(np.where(train.labels == label)[0]) for label in range(10)}
    gen = philox(seed)
    clients = []
    for i, client in enumerate(spec):
        if not client.labels:
            raise DataError(f"custom partition: client {i} has an empty label set")
        if any(l < 0 or l > 9 for l in client.labels):
            raise DataError(f"custom partition: client {i} labels outside [0, 9]")
        picked: list[np.ndarray] = []
        for label in sorted(client.labels):
            pool = np.asarray(pools[label])
            if client.max_per_label is None:
                take = len(pool)
            else:
                take = client.max_per_label
                if take > len(pool):
                    raise DataError(
                        f"custom partition: client {i} wants {take} of label {label}, "
                        f"only {len(pool)} remain"
                    )
            if take == 0:
                continue
            chosen = gen.choice(len(pool), size=take, replace=False)
            chosen_idx = pool[np.sort(chosen)]
            picked.append(chosen_idx)
            remaining = np.ones(len(pool), dtype=bool)
            remaining[chosen] = False
            pools[label] = list(pool[remaining])
        if not picked:
            raise DataError(f"custom partition: client {i} ended up empty")
        clients.append(train.subset(np.sort(np.concatenate(picked))))
    return clients


def filter_test(test: LabeledSet, labels) -> LabeledSet:
    """Rows whose label is in the given set, original order preserved."""
    labels = set(labels)
    if not labels:
        raise DataError("filter_test needs a non-empty label set")
    mask = np.isin(test.labels, sorted(labels))
    if not mask.any():
        raise DataError(f"no test samples for labels {sorted(labels)}")
    return LabeledSet(test.images[mask], test.labels[mask])
