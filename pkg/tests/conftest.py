import numpy as np
import pytest

import pdpsolve.core as core
import pdpsolve.precond as precond
from pdpsolve._backend import BACKEND, get_kernels

BACKENDS = ["python"] + (["cython"] if BACKEND == "cython" else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per available kernel backend."""
    k = get_kernels(request.param)
    monkeypatch.setattr(core, "kernels", k)
    monkeypatch.setattr(precond, "kernels", k)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
