import os

import numpy as np
import pytest

from vmcbench import kernels


@pytest.fixture(autouse=True)
def _restore_kernel_backend():
    before = kernels.get_backend()
    yield
    kernels.set_backend(before)


@pytest.fixture()
def cache_dir(tmp_path, monkeypatch):
    path = tmp_path / "feature_cache"
    monkeypatch.setenv("VMC_CACHE_DIR", str(path))
    return path


@pytest.fixture()
def gen():
    return np.random.default_rng(1234)
