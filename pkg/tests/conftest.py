import os

import numpy as np
import pytest


def pytest_addoption(parser):
    parser.addoption("--slow", action="store_true", default=False,
                     help="also run long experiments (scaled MNIST smoke run)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--slow"):
        return
    skip = pytest.mark.skip(reason="needs --slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def mnist_dir():
    path = os.environ.get("DBST_MNIST_DIR")
    names = ["train-images-idx3-ubyte", "train-labels-idx1-ubyte"]
    if not path or not all(os.path.isfile(os.path.join(path, n)) for n in names):
        pytest.skip("MNIST IDX files not found (set DBST_MNIST_DIR)")
    return path
