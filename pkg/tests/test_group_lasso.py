import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grouplens.core import GroupPartition, RegressionProblem, default_weights
from grouplens.errors import InvalidArgumentError
from grouplens.group_lasso import (fit_group_lasso, group_soft_threshold, kkt_certificate,
                                   objective)
from helpers import orthonormal_columns, prox_grad_reference, random_problem


@pytest.mark.parametrize("t,expected", [(0.0, [3, 4]), (5.0, [0, 0]), (2.5, [1.5, 2.0])])
def test_group_soft_threshold(t, expected):
    np.testing.assert_allclose(group_soft_threshold(np.array([3.0, 4.0]), t), expected)


def test_group_soft_threshold_negative():
    with pytest.raises(InvalidArgumentError):
        group_soft_threshold(np.ones(2), -1.0)


def test_orthonormal_group_below_threshold_is_zero():
    rng = np.random.default_rng(0)
    X = orthonormal_columns(rng, 20, 3)
    part = GroupPartition.contiguous([3])
    y = rng.standard_normal(20)
    w = np.linalg.norm(X.T @ y / 20) + 1e-3
    fit = fit_group_lasso(RegressionProblem(X, y, part, np.array([w])))
    np.testing.assert_array_equal(fit.beta, 0)
    assert fit.kkt_residual == 0


def test_zero_penalty_is_least_squares():
    rng = np.random.default_rng(1)
    pr, _ = random_problem(rng, 30, [2, 3, 1])
    fit = fit_group_lasso(pr, np.zeros(3), kkt_tol=1e-12)
    ols = np.linalg.solve(pr.X.T @ pr.X, pr.X.T @ pr.y)
    np.testing.assert_allclose(fit.beta, ols, atol=1e-8)


def test_zero_penalty_rank_deficient_block_rejected():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((10, 4))
    X[:, 1] = X[:, 0]
    pr = RegressionProblem(X, rng.standard_normal(10), GroupPartition.contiguous([2, 2]),
                           np.ones(2))
    with pytest.raises(InvalidArgumentError):
        fit_group_lasso(pr, np.array([0.0, 1.0]))


def test_matches_reference_n10_p4():
    rng = np.random.default_rng(3)
    part = GroupPartition.contiguous([2, 2])
    X = rng.standard_normal((10, 4))
    y = X @ np.array([1.0, -1.0, 0.5, 0.0]) + 0.5 * rng.standard_normal(10)
    pens = np.full(2, 0.3)
    pr = RegressionProblem(X, y, part, pens)
    fit = fit_group_lasso(pr, pens, kkt_tol=1e-12)
    ref = prox_grad_reference(X, y, part, pens)
    assert np.any(ref != 0)
    assert np.max(np.abs(fit.beta - ref)) <= 1e-6
    assert kkt_certificate(pr, pens, ref)["max_violation"] <= 1e-6


def test_kkt_certificate_zero_beta():
    rng = np.random.default_rng(4)
    pr, _ = random_problem(rng, 15, [2, 2])
    g = np.array([np.linalg.norm(pr.X[:, idx].T @ pr.y / 15) for idx in pr.partition.groups])
    cert = kkt_certificate(pr, g + 0.01, np.zeros(4))
    assert cert["max_violation"] == 0.0
    pens = g.copy()
    pens[1] -= 0.1
    cert = kkt_certificate(pr, pens, np.zeros(4))
    assert cert["per_group_violation"][1] == pytest.approx(0.1)
    assert cert["per_group_violation"][0] == 0.0


def test_objective_trace_monotone_and_recomputed():
    rng = np.random.default_rng(5)
    pr, _ = random_problem(rng, 40, [3, 2, 4, 1, 2], weights=np.full(5, 0.1))
    fit = fit_group_lasso(pr)
    assert fit.converged
    tr = np.array(fit.trace)
    assert np.all(np.diff(tr) <= 1e-12 * np.abs(tr[:-1]))
    assert fit.objective == pytest.approx(objective(pr, pr.weights, fit.beta), rel=1e-10)


def test_nonconvergence_flag():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((30, 6))
    X[:, 3:] = X[:, :3] + 0.01 * rng.standard_normal((30, 3))
    pr = RegressionProblem(X, rng.standard_normal(30), GroupPartition.contiguous([3, 3]),
                           np.full(2, 0.01))
    fit = fit_group_lasso(pr, max_iter=1, kkt_tol=1e-14)
    assert not fit.converged and fit.kkt_residual > 1e-14


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.1, 10.0))
def test_scale_property(seed, c):
    rng = np.random.default_rng(seed)
    pr, _ = random_problem(rng, 25, [2, 3, 2], weights=np.full(3, 0.2))
    a = fit_group_lasso(pr, kkt_tol=1e-12)
    b = fit_group_lasso(RegressionProblem(pr.X, c * pr.y, pr.partition, c * pr.weights),
                        kkt_tol=1e-12 * c)
    np.testing.assert_allclose(b.beta, c * a.beta, atol=1e-8 * c)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_error_in_cone_on_noise_event(seed):
    rng = np.random.default_rng(seed)
    n, sizes, xi = 60, [3] * 6, 2.0
    part = GroupPartition.contiguous(sizes)
    X = rng.standard_normal((n, 18))
    beta = np.zeros(18)
    beta[:3] = [1.5, -1.0, 2.0]
    eps = rng.standard_normal(n)
    y = X @ beta + eps
    noise = np.array([np.linalg.norm(X[:, g].T @ eps / n) for g in part.groups])
    pens = (xi + 1) / (xi - 1) * noise.max() * np.ones(6) * 1.001
    fit = fit_group_lasso(RegressionProblem(X, y, part, pens), kkt_tol=1e-11)
    h = fit.beta - beta
    hn = np.array([np.linalg.norm(h[g]) for g in part.groups])
    assert np.sum(pens[1:] * hn[1:]) <= xi * pens[0] * hn[0] + 1e-8
