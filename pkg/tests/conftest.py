"""
Shared fixtures: synthetic MNIST-shaped data written as IDX files.
"""
import os

import pytest

from app.data.mnist import write_idx

from .factories import synthetic_bytes


def pytest_collection_modifyitems(config, items):
    if os.environ.get("MNIST_DIR") or config.getoption("-m") == "slow":
        return
    skip = pytest.mark.skip(reason="acceptance-scale run; select -m slow (with MNIST_DIR for MNIST runs)")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def idx_pair(tmp_path):
    """(images_path, labels_path) of 60 synthetic training samples."""
    images, labels = synthetic_bytes(60)
    paths = (tmp_path / "train-images-idx3-ubyte", tmp_path / "train-labels-idx1-ubyte")
    write_idx(images, labels, *paths)
    return paths


@pytest.fixture
def data_dir(tmp_path):
    """Directory holding synthetic train (300) and test (100) IDX pairs under the standard names."""
    directory = tmp_path / "mnist"
    directory.mkdir()
    for name, n, seed in (("train", 300, 1), ("t10k", 100, 2)):
        images, labels = synthetic_bytes(n, seed)
        write_idx(images, labels, directory / f"{name}-images-idx3-ubyte", directory / f"{name}-labels-idx1-ubyte")
    return directory
