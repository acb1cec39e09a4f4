import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from lexprobe import kernels  # noqa: E402

import golden_oracle  # noqa: E402


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # JIT compilation happens here so timed tests see steady-state costs
    kernels.warmup()


@pytest.fixture(scope="session")
def golden(tmp_path_factory):
    root = tmp_path_factory.mktemp("golden_stores")
    return golden_oracle.build_golden(root)


@pytest.fixture(scope="session")
def golden_datasets():
    return golden_oracle.load_golden_datasets()
