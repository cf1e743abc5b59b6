import json

import numpy as np
import pytest
from scipy import stats

from grouplens import simulation
from grouplens.errors import InvalidArgumentError
from grouplens.simulation import (SimDesign, block_design, generate, large_group_design,
                                  null_design, orthonormalize_groups, qq_pairs, rng_for,
                                  run_replications, sigma_design, small_group_design)


def _tiny(**kw):
    base = dict(n=60, p=20, group_size=4, g=1, s=4, signal="uniform", test_groups=(0, 1))
    base.update(kw)
    return SimDesign(**base)


def _within_block_corr(rho, n=5000):
    d = SimDesign(n=n, p=20, group_size=5, g=1, s=5, rho=rho, test_groups=())
    X = generate(d, 0).problem.X
    C = np.corrcoef(X, rowvar=False)
    inside = [C[i, j] for b in range(4) for i in range(5 * b, 5 * b + 5)
              for j in range(5 * b, 5 * b + 5) if i < j]
    outside = C[np.ix_(range(5), range(5, 20))].ravel()
    return np.array(inside), outside


@pytest.mark.parametrize("rho", [0.0, 0.5])
def test_generator_correlations(rho):
    inside, outside = _within_block_corr(rho)
    assert np.all(np.abs(inside - rho) <= 0.05)
    assert np.all(np.abs(outside) <= 0.05)


def test_orthonormalized_groups():
    d = _tiny(orthonormalize_groups=True)
    X = generate(d, 0).problem.X
    for g in d.partition().groups:
        np.testing.assert_allclose(X[:, g].T @ X[:, g] / d.n, np.eye(g.size), atol=1e-10)


def test_orthonormalize_rejects_rank_deficient_group():
    from grouplens.core import GroupPartition
    X = np.ones((10, 2))
    with pytest.raises(InvalidArgumentError):
        orthonormalize_groups(X, GroupPartition.contiguous([2]))


@pytest.mark.parametrize("kw", [dict(rho=1.0), dict(rho=-0.4), dict(p=21), dict(s=9),
                                dict(signal="laplace"), dict(alpha=0.0), dict(test_groups=(5,)),
                                dict(penalty="l1"), dict(sigma=0.0)])
def test_invalid_designs(kw):
    with pytest.raises(InvalidArgumentError):
        _tiny(**kw)


def test_true_beta_patterns():
    d = block_design(0.0, 1.0)
    beta = generate(d, 0).beta
    assert np.array_equal(np.flatnonzero(beta), np.arange(5)) and np.all(beta[:5] == 1.0)
    d = small_group_design()
    beta = generate(d, 0).beta
    assert np.count_nonzero(beta) == 40 and np.all((beta[beta != 0] >= 2) & (beta[beta != 0] <= 3))
    assert np.count_nonzero(beta[d.partition().groups[d.test_groups[0]]]) == 0
    beta = generate(sigma_design(), 0).beta
    assert np.count_nonzero(beta) == 8 and set(np.abs(beta[beta != 0])) == {1.0}


def test_presets_match_the_study():
    assert (sigma_design().n, sigma_design().p, sigma_design().M) == (1000, 200, 50)
    assert sigma_design(p=2000).M == 500
    lg = large_group_design()
    assert (lg.group_size, lg.g, lg.s) == (20, 2, 40)
    assert null_design().tau == 0 and null_design().test_groups == (0,)


def test_streams_are_keyed():
    a = rng_for(1, 2, 0).standard_normal(3)
    assert np.array_equal(a, rng_for(1, 2, 0).standard_normal(3))
    assert not np.array_equal(a, rng_for(1, 3, 0).standard_normal(3))
    assert not np.array_equal(a, rng_for(1, 2, 1).standard_normal(3))


def test_generate_is_deterministic():
    d = _tiny()
    a, b = generate(d, 4), generate(d, 4)
    assert np.array_equal(a.problem.y, b.problem.y) and np.array_equal(a.eps, b.eps)


def test_threads_do_not_change_results():
    d = _tiny()
    one = run_replications(d, 4, threads=1)
    two = run_replications(d, 4, threads=2)
    assert json.dumps(one.to_dict(), sort_keys=True) == json.dumps(two.to_dict(), sort_keys=True)


def test_start_offset_selects_replications():
    d = _tiny()
    full = run_replications(d, 3)
    tail = run_replications(d, 2, start=1)
    assert full.rows[1:] == tail.rows


def test_rates_and_summary_bounds():
    s = run_replications(_tiny(), 10)
    a = s.aggregates
    assert 0 <= a["TP"] <= 1 and 0 <= a["FP"] <= 1
    for g in a["groups"].values():
        assert 0 <= g["coverage"] <= 1 and 0 <= g["ks_chi2"] <= 1
    assert a["successful_reps"] == 10 and not s.failures
    json.dumps(s.to_dict())


def test_qq_pairs_sorted():
    rng = np.random.default_rng(0)
    pairs = qq_pairs(rng.chisquare(4, 50), stats.chi2(4))
    assert pairs.shape == (50, 2)
    assert np.all(np.diff(pairs[:, 0]) > 0) and np.all(np.diff(pairs[:, 1]) >= 0)


def test_failures_are_recorded(monkeypatch):
    real = simulation.run_one

    def flaky(design, rep):
        if rep == 1:
            raise FloatingPointError("boom")
        return real(design, rep)

    monkeypatch.setattr(simulation, "run_one", flaky)
    s = run_replications(_tiny(), 3)
    assert len(s.failures) == 1 and "boom" in s.failures[0]["error"]
    assert s.aggregates["successful_reps"] == 2


def test_reps_must_be_positive():
    with pytest.raises(InvalidArgumentError):
        run_replications(_tiny(), 0)


def test_design_dict_round_trip():
    d = block_design(0.5, 0.1)
    assert SimDesign.from_dict(json.loads(json.dumps(d.to_dict()))) == d
    with pytest.raises(InvalidArgumentError):
        SimDesign.from_dict({**d.to_dict(), "bogus": 1})
