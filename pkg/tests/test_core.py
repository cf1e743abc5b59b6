import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grouplens.core import (GroupPartition, RegressionProblem, SparsityPattern,
                            default_weights, validate)
from grouplens.errors import InvalidArgumentError

# high-precision values (mpmath, 30 digits)
OMEGA_D4_N1000_M50 = 0.151699190838324647
OMEGA_D4_N1000_M1 = 0.0632455532033675866
OMEGA_D5_N100_M40_SCALE5 = 2.47613550449051435


def test_partition_basic():
    part = GroupPartition([[3, 1], [0, 2], [4]])
    assert part.M == 3 and part.p == 5
    assert part.groups[0].tolist() == [1, 3]
    assert part.sizes.tolist() == [2, 2, 1]
    assert part.labels().tolist() == [1, 0, 1, 0, 2]


@pytest.mark.parametrize("groups", [[[0, 1], [1, 2]], [[0, 1], [3]], [[]], [[0, 0, 1]]])
def test_partition_rejects_bad_groups(groups):
    with pytest.raises(InvalidArgumentError):
        GroupPartition(groups)


@given(st.lists(st.integers(0, 5), min_size=1, max_size=40))
def test_partition_from_labels_is_bijection(labels):
    part = GroupPartition.from_labels(labels)
    assert sum(part.sizes) == part.p == len(labels)
    seen = np.concatenate(part.groups)
    assert sorted(seen.tolist()) == list(range(part.p))
    lab = part.labels()
    for j, g in enumerate(part.groups):
        assert np.all(lab[g] == j)


def test_default_weights_values():
    part = GroupPartition.contiguous([4] * 50)
    w = default_weights(part, 1000)
    assert w == pytest.approx(np.full(50, OMEGA_D4_N1000_M50), rel=1e-12)
    one = default_weights(GroupPartition.contiguous([4]), 1000)
    assert one[0] == pytest.approx(OMEGA_D4_N1000_M1, rel=1e-12)
    t1 = default_weights(GroupPartition.contiguous([5] * 40), 100, scale=5.0)
    assert t1[0] == pytest.approx(OMEGA_D5_N100_M40_SCALE5, rel=1e-12)


def test_default_weights_explicit_M_and_delta():
    part = GroupPartition.contiguous([20] * 10)
    w = default_weights(part, 100, M=40)
    assert w[0] == pytest.approx(math.sqrt(0.2) + math.sqrt(2 * math.log(40) / 100))
    wd = default_weights(part, 100, delta=0.5)
    assert wd[0] == pytest.approx(math.sqrt(0.2) + math.sqrt(2 * math.log(20) / 100))


@given(st.floats(0.01, 100.0), st.integers(1, 500))
def test_default_weights_homogeneous(c, n):
    part = GroupPartition.contiguous([1, 3, 7])
    np.testing.assert_allclose(default_weights(part, n, scale=c),
                               c * default_weights(part, n), rtol=1e-13)


@pytest.mark.parametrize("scale", [0.0, -1.0, float("inf")])
def test_default_weights_bad_scale(scale):
    with pytest.raises(InvalidArgumentError):
        default_weights(GroupPartition.contiguous([2]), 10, scale=scale)


def _problem(n=6, p=4):
    rng = np.random.default_rng(0)
    part = GroupPartition.contiguous([2, 2])
    return RegressionProblem(rng.standard_normal((n, p)), rng.standard_normal(n), part,
                             np.ones(2))


def test_validate_ok_and_messages():
    pr = _problem()
    assert validate(pr) == []

    class Loose:  # unvalidated container mimicking a problem
        pass

    bad = Loose()
    bad.X, bad.y, bad.partition, bad.weights = pr.X, pr.y[:-1], pr.partition, pr.weights
    assert any(d.startswith("response length mismatch") for d in validate(bad))
    bad.y = pr.y
    X = pr.X.copy()
    X[:, 2] = 0
    bad.X = X
    assert any("degenerate column" in d for d in validate(bad))
    bad.X = pr.X
    bad.weights = np.array([1.0, 0.0])
    assert any("weight" in d for d in validate(bad))


def test_problem_rejects_nan_and_allows_zero_column():
    pr = _problem()
    y = pr.y.copy()
    y[0] = np.nan
    with pytest.raises(InvalidArgumentError):
        pr.with_response(y)
    X = pr.X.copy()
    X[:, 0] = 0
    RegressionProblem(X, pr.y, pr.partition, pr.weights)  # diagnosed, not fatal


def test_problem_is_read_only():
    pr = _problem()
    with pytest.raises(ValueError):
        pr.X[0, 0] = 1.0


def test_sparsity_pattern():
    part = GroupPartition.contiguous([2, 3, 1])
    sp = SparsityPattern([0, 2], part)
    assert sp.g == 2 and sp.s == 3
    assert sp.support().tolist() == [0, 1, 5]
    beta = np.zeros(6)
    beta[[0, 5]] = 1
    assert sp.contains(beta)
    beta[3] = 1
    assert not sp.contains(beta)
