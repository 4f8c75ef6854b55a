import numpy as np
import pytest

from rgrasp import kernels, objectives


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    with kernels.using_backend(request.param):
        yield request.param


@pytest.fixture(autouse=True)
def _debug_checks(monkeypatch):
    monkeypatch.setattr(objectives, "DEBUG_CHECKS", True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dense_problem(n, d, seed=0, kind="least_squares", density=1.0):
    """A small random dataset as (W, y) plus the Objective built from it."""
    r = np.random.default_rng(seed)
    W = r.standard_normal((n, d))
    if density < 1.0:
        W *= r.random((n, d)) < density
    if kind == "logistic":
        y = np.where(r.standard_normal(n) >= 0, 1.0, -1.0)
    else:
        y = r.standard_normal(n)
    ds = objectives.SparseDataset.from_dense(W, y)
    return W, y, objectives.Objective(kind, ds)
