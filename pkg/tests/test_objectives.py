import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rgrasp.core import InvalidArgument, InvalidInput
from rgrasp.objectives import LEAST_SQUARES, LOGISTIC, Objective, SparseDataset, inner_product

from conftest import dense_problem


def fd_gradient(f, x, h=1e-5):
    g = np.zeros_like(x)
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_hand_values():
    ds = SparseDataset.from_dense([[1.0, 0.0], [0.0, 1.0]], [1.0, 2.0])
    obj = Objective(LEAST_SQUARES, ds)
    assert obj.loss(np.zeros(2)) == 1.25
    assert np.array_equal(obj.component_gradient(0, np.zeros(2)), [-1.0, 0.0])
    assert inner_product([2], [3.0], np.array([0.0, 0.0, 4.0])) == 12.0
    assert inner_product([], [], np.zeros(3)) == 0.0


@pytest.mark.parametrize("seed", range(3))
def test_logistic_at_zero(seed):
    W, y, obj = dense_problem(17, 9, seed=seed, kind=LOGISTIC, density=0.5)
    assert obj.loss(np.zeros(9)) == math.log(2.0)
    np.testing.assert_allclose(obj.full_gradient(np.zeros(9)), -(W.T @ y) / (2 * 17), rtol=1e-13, atol=1e-16)


def test_saturated_logistic_gradient():
    ds = SparseDataset.from_dense([[1.0, 2.0]], [1.0])
    obj = Objective(LOGISTIC, ds)
    assert np.all(np.abs(obj.component_gradient(0, np.array([500.0, 500.0]))) < 1e-300)


def test_extreme_margins_finite():
    ds = SparseDataset.from_dense([[1.0], [1.0], [-1.0]], [1.0, -1.0, 1.0])
    obj = Objective(LOGISTIC, ds)
    for x in (700.0, -700.0, 1e4):
        f = obj.loss(np.array([x]))
        g = obj.full_gradient(np.array([x]))
        assert math.isfinite(f) and np.all(np.isfinite(g))
    # margin -700 for sample 0: loss is ~700, not inf
    assert abs(obj.component_loss(0, np.array([-700.0])) - 700.0) < 1e-9


@pytest.mark.parametrize("kind", [LEAST_SQUARES, LOGISTIC])
def test_full_gradient_is_average(kind):
    _, _, obj = dense_problem(50, 100, seed=11, kind=kind, density=0.3)
    x = np.random.default_rng(0).standard_normal(100) * 0.3
    avg = np.mean([obj.component_gradient(i, x) for i in range(50)], axis=0)
    g = obj.full_gradient(x)
    assert np.linalg.norm(g - avg) <= 1e-10 * np.linalg.norm(avg)


def test_noiseless_truth_is_stationary():
    from rgrasp.data import SyntheticSpec, generate_synthetic
    ds, truth = generate_synthetic(SyntheticSpec(n=60, d=40, s_star=5, seed=3))
    obj = Objective(LEAST_SQUARES, ds)
    assert obj.loss(truth.x_star) < 1e-28
    assert np.linalg.norm(obj.full_gradient(truth.x_star)) < 1e-13


def test_inner_product_oracle(rng):
    for _ in range(100):
        d = int(rng.integers(1, 50))
        k = int(rng.integers(0, d + 1))
        idx = np.sort(rng.choice(d, size=k, replace=False))
        vals = rng.standard_normal(k)
        x = rng.standard_normal(d)
        dense = np.zeros(d)
        dense[idx] = vals
        assert abs(inner_product(idx, vals, x) - float(dense @ x)) <= 1e-12 * (1 + np.abs(dense) @ np.abs(x))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([LEAST_SQUARES, LOGISTIC]))
def test_convex_along_segments(seed, kind):
    _, _, obj = dense_problem(8, 6, seed=seed % 7, kind=kind)
    r = np.random.default_rng(seed)
    a, b = r.standard_normal(6) * 3, r.standard_normal(6) * 3
    assert obj.loss((a + b) / 2) <= 0.5 * (obj.loss(a) + obj.loss(b)) + 1e-12


@pytest.mark.parametrize("kind", [LEAST_SQUARES, LOGISTIC])
def test_component_gradient_fd(kind):
    _, _, obj = dense_problem(12, 7, seed=5, kind=kind, density=0.6)
    r = np.random.default_rng(8)
    for _ in range(20):
        i = int(r.integers(12))
        x = r.standard_normal(7)
        fd = fd_gradient(lambda v: obj.component_loss(i, v), x)
        g = obj.component_gradient(i, x)
        assert np.linalg.norm(g - fd) <= 1e-6 * max(np.linalg.norm(fd), 1e-8) or np.linalg.norm(g - fd) < 1e-9


def test_validation_errors():
    with pytest.raises(InvalidInput):
        SparseDataset([0, 1], [5], [1.0], [0.0], d=3)
    with pytest.raises(InvalidInput):
        SparseDataset([0, 2], [1, 0], [1.0, 1.0], [0.0], d=3)
    with pytest.raises(InvalidInput):
        SparseDataset([0, 1], [0], [np.nan], [0.0], d=3)
    with pytest.raises(InvalidInput):
        SparseDataset([0, 1], [0], [0.0], [0.0], d=3)
    with pytest.raises(InvalidInput):
        SparseDataset([0, 1, 1], [0], [1.0], [0.0], d=3)
    ds = SparseDataset([0, 1], [0], [1.0], [0.5], d=3)
    with pytest.raises(InvalidInput):
        Objective(LOGISTIC, ds)
    with pytest.raises(InvalidArgument):
        Objective("hinge", ds)
    obj = Objective(LEAST_SQUARES, ds)
    with pytest.raises(InvalidArgument):
        obj.loss(np.zeros(2))
    with pytest.raises(InvalidArgument):
        obj.component_gradient(1, np.zeros(3))
    with pytest.raises(ValueError):
        ds.data[0] = 2.0  # immutable


def test_sparse_gradient_form():
    _, _, obj = dense_problem(10, 30, seed=1, density=0.2)
    idx, vals = obj.component_gradient_sparse(3, np.ones(30))
    assert np.array_equal(idx, obj.dataset.column(3)[0])
    assert vals.shape == idx.shape


def test_lipschitz_estimate():
    ds = SparseDataset.from_dense([[3.0, 4.0], [1.0, 0.0]], [1.0, -1.0])
    assert Objective(LEAST_SQUARES, ds).lipschitz_estimate() == 25.0
    assert Objective(LOGISTIC, ds).lipschitz_estimate() == 6.25
