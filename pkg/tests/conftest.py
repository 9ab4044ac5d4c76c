import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for helpers.py

from helpers import write_idx_pair  # noqa: E402

from fedtier.data import (  # noqa: E402
    TEST_IMAGES,
    TEST_LABELS,
    TRAIN_IMAGES,
    TRAIN_LABELS,
    LabeledSet,
    load_mnist_dir,
)

MNIST_ENV = "FEDTIER_MNIST_DIR"


def _mnist_dir() -> str | None:
    directory = os.environ.get(MNIST_ENV)
    if directory and Path(directory).is_dir():
        return directory
    return None


def pytest_collection_modifyitems(config, items):
    if _mnist_dir() is None:
        skip = pytest.mark.skip(reason=f"{MNIST_ENV} not set; canonical MNIST files required")
        for item in items:
            if "mnist" in item.keywords:
                item.add_marker(skip)


@pytest.fixture(scope="session")
def mnist_dir() -> str:
    directory = _mnist_dir()
    assert directory is not None
    return directory


@pytest.fixture(scope="session")
def mnist(mnist_dir) -> tuple[LabeledSet, LabeledSet]:
    return load_mnist_dir(mnist_dir)


@pytest.fixture(scope="session")
def tiny_idx_dir(tmp_path_factory) -> Path:
    """A small but complete MNIST-shaped dataset directory (40/label train,
    10/label test), usable by the CLI and service without the real files."""
    directory = tmp_path_factory.mktemp("tiny_mnist")
    gen = np.random.Generator(np.random.Philox(key=99))
    prototypes = gen.integers(0, 255, size=(10, 28, 28))

    def build(per_label: int, seed: int):
        g = np.random.Generator(np.random.Philox(key=seed))
        images, labels = [], []
        for label in range(10):
            noise = g.integers(-30, 30, size=(per_label, 28, 28))
            images.append(np.clip(prototypes[label] + noise, 0, 255))
            labels.extend([label] * per_label)
        order = g.permutation(per_label * 10)
        return np.concatenate(images)[order], np.asarray(labels, dtype=np.uint8)[order]

    train_images, train_labels = build(40, seed=1)
    test_images, test_labels = build(10, seed=2)
    write_idx_pair(directory, train_images, train_labels, TRAIN_IMAGES, TRAIN_LABELS)
    write_idx_pair(directory, test_images, test_labels, TEST_IMAGES, TEST_LABELS)
    return directory
