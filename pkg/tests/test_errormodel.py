import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bessagg.core import InvalidArgumentError
from bessagg.errormodel import (GaussianErrorModel, IllConditionedModelError, condition, estimate, make_rng,
                                sample)


def random_model(rng, dim):
    a = rng.normal(size=(dim, dim))
    sigma = a @ a.T / dim + 0.1 * np.eye(dim)
    return GaussianErrorModel(rng.normal(size=dim), sigma, tuple(range(1, dim + 1)))


def test_model_invariants():
    with pytest.raises(InvalidArgumentError, match="symmetric"):
        GaussianErrorModel([0, 0], [[1, 0.5], [0.4, 1]], (1, 2))
    with pytest.raises(InvalidArgumentError, match="semidefinite"):
        GaussianErrorModel([0, 0], [[1, 2], [2, 1]], (1, 2))
    with pytest.raises(InvalidArgumentError):
        GaussianErrorModel([0, 0], np.eye(2), (1,))


def test_estimate_zero_matrix():
    m = estimate(np.zeros((40, 24)))
    assert np.all(m.mu == 0) and np.all(m.sigma == 0)


def test_estimate_shrinks_duplicate_columns():
    col = np.random.default_rng(0).normal(size=100)
    m = estimate(np.column_stack([col, col, np.random.default_rng(1).normal(size=100)]))
    corr = m.sigma[0, 1] / np.sqrt(m.sigma[0, 0] * m.sigma[1, 1])
    assert corr == pytest.approx(0.95, abs=1e-12)


def test_estimate_iid_normal():
    m = estimate(np.random.default_rng(2).standard_normal((10_000, 24)))
    assert np.all(np.abs(m.mu) < 0.05)
    assert np.all(np.abs(np.diag(m.sigma) - 1) < 0.1)


def test_estimate_requires_thirty_days():
    with pytest.raises(InvalidArgumentError, match="30"):
        estimate(np.zeros((29, 24)))
    bad = np.zeros((40, 24))
    bad[3, 3] = np.nan
    with pytest.raises(InvalidArgumentError):
        estimate(bad)


def test_condition_independent_blocks():
    sigma = np.diag([1.0, 2.0, 3.0])
    m = GaussianErrorModel([1.0, 2.0, 3.0], sigma, (1, 2, 3))
    c = condition(m, [1], [5.0])
    assert np.allclose(c.mu, [2.0, 3.0]) and np.allclose(c.sigma, np.diag([2.0, 3.0]))
    assert c.hour_labels == (2, 3)


def test_condition_bivariate_closed_form():
    m = GaussianErrorModel([0.0, 0.0], [[1.0, 0.8], [0.8, 1.0]], (1, 2))
    c = condition(m, [1], [1.0])
    assert c.mu[0] == pytest.approx(0.8, abs=1e-6)
    assert c.sigma[0, 0] == pytest.approx(0.36, abs=1e-6)
    # Monte-Carlo oracle: least-squares regression of X2 on X1 fitted to joint draws
    draws = sample(m, 1_000_000, 7)
    design = np.column_stack([np.ones(len(draws)), draws[:, 0]])
    coef, *_ = np.linalg.lstsq(design, draws[:, 1], rcond=None)
    resid = draws[:, 1] - design @ coef
    assert coef[0] + coef[1] * 1.0 == pytest.approx(c.mu[0], abs=0.01)
    assert resid.var() == pytest.approx(c.sigma[0, 0], abs=0.01)


def test_condition_at_mean_contracts_variance():
    m = random_model(np.random.default_rng(3), 6)
    c = condition(m, [2, 5], m.mu[[1, 4]])
    rest = [0, 2, 3, 5]
    assert np.allclose(c.mu, m.mu[rest])
    assert np.all(np.diag(c.sigma) <= np.diag(m.sigma)[rest] + 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 12))
def test_condition_splitting_consistent(seed, dim):
    rng = np.random.default_rng(seed)
    m = random_model(rng, dim)
    obs = rng.normal(size=2)
    both = condition(m, [1, 2], obs)
    staged = condition(condition(m, [1], obs[:1]), [2], obs[1:])
    assert np.allclose(both.mu, staged.mu, atol=1e-6)
    assert np.allclose(both.sigma, staged.sigma, atol=1e-6)
    assert np.all(np.diag(both.sigma) <= np.diag(m.sigma)[2:] + 1e-9)


def test_condition_errors():
    m = random_model(np.random.default_rng(4), 3)
    with pytest.raises(InvalidArgumentError):
        condition(m, [], [])
    with pytest.raises(InvalidArgumentError):
        condition(m, [1, 2, 3], [0, 0, 0])
    with pytest.raises(InvalidArgumentError):
        condition(m, [7], [0.0])
    with pytest.raises(InvalidArgumentError):
        condition(m, [1], [0.0, 1.0])


def test_condition_drops_zero_variance_hours():
    sigma = np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 0.5], [0.0, 0.5, 1.0]])
    m = GaussianErrorModel(np.zeros(3), sigma, (1, 2, 3))
    c = condition(m, [1, 2], [0.0, 1.0])
    assert c.mu[0] == pytest.approx(0.5, abs=1e-6)
    assert c.sigma[0, 0] == pytest.approx(0.75, abs=1e-6)


def test_condition_ill_conditioned_block():
    # an indefinite observed block cannot be repaired by the tiny ridge
    sigma = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    m = GaussianErrorModel(np.zeros(3), sigma, (1, 2, 3))
    c = condition(m, [1, 2], [1.0, 1.0])  # singular but consistent: ridge handles it
    assert np.isfinite(c.mu).all()
    hacked = object.__new__(GaussianErrorModel)
    object.__setattr__(hacked, "mu", np.zeros(3))
    object.__setattr__(hacked, "sigma", np.array([[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
    object.__setattr__(hacked, "hour_labels", (1, 2, 3))
    with pytest.raises(IllConditionedModelError):
        condition(hacked, [1, 2], [0.0, 0.0])


def test_sample_degenerate_and_deterministic():
    m = GaussianErrorModel([1.0, -2.0], np.zeros((2, 2)), (1, 2))
    assert np.all(sample(m, 5, 0) == [1.0, -2.0])
    m = random_model(np.random.default_rng(5), 4)
    assert np.array_equal(sample(m, 10, (3, 1, 4)), sample(m, 10, (3, 1, 4)))
    assert not np.array_equal(sample(m, 10, (3, 1, 4)), sample(m, 10, (3, 1, 5)))
    with pytest.raises(InvalidArgumentError):
        sample(m, 0, 1)


def test_sample_moments_scalar():
    x = sample(GaussianErrorModel([0.0], [[1.0]], (1,)), 1_000_000, 12)[:, 0]
    assert abs(x.mean()) < 0.005
    assert abs(x.var() - 1) < 0.01


def test_estimate_sample_roundtrip():
    m = random_model(np.random.default_rng(6), 5)
    n = 100_000
    est = estimate(sample(m, n, 99), shrinkage=0.0)
    se_mu = np.sqrt(np.diag(m.sigma) / n)
    assert np.all(np.abs(est.mu - m.mu) < 3 * se_mu + 1e-12)
    d = np.sqrt(np.diag(m.sigma))
    se_cov = np.sqrt((m.sigma ** 2 + np.outer(d ** 2, d ** 2)) / n)
    assert np.all(np.abs(est.sigma - m.sigma) < 4 * se_cov)


def test_make_rng_is_pcg64():
    assert isinstance(make_rng(1).bit_generator, np.random.PCG64)
    assert make_rng((1, 2)).random() == make_rng([1, 2]).random()
