import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import gammaln

from poisson_shrink.countmodels import (FlatSumLaw, GammaSumLaw, SumProportionsPrior,
                                        count_moments, count_moments_from_params,
                                        dirichlet_profile_loglik, empirical_moments,
                                        fit_symmetric_alpha, independent_gamma_prior,
                                        log_marginal_pmf, log_negbin_pmf, marginal_pmf,
                                        marginal_Z_pmf, posterior, prior_from_dict,
                                        process_dependence_priors, sample_joint,
                                        time_dependence_priors)


def test_k_ratio():
    assert FlatSumLaw().k_ratio(4) == 4
    assert GammaSumLaw(3, 1).k_ratio(2) == 2.0
    z = np.arange(1, 30)
    law = GammaSumLaw(2.5, 0.7)
    np.testing.assert_allclose(np.exp(law.log_k(z) - law.log_k(z - 1)), law.k_ratio(z))
    np.testing.assert_allclose(np.exp(FlatSumLaw().log_k(z) - FlatSumLaw().log_k(z - 1)), z)


def test_posterior_examples():
    prior = SumProportionsPrior(GammaSumLaw(2, 3), np.array([1.0, 1.0]))
    post = posterior(prior, [0, 0])
    assert post.sum_law == GammaSumLaw(2, 4)
    np.testing.assert_array_equal(post.dirichlet_alpha, [1, 1])
    flat = posterior(SumProportionsPrior(FlatSumLaw(), np.ones(2)), [1, 3])
    assert flat.sum_law == GammaSumLaw(5, 1)
    np.testing.assert_array_equal(posterior(prior, [2, 3]).dirichlet_alpha, [3, 4])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 20), min_size=3, max_size=3),
       st.lists(st.integers(0, 20), min_size=3, max_size=3))
def test_sequential_updates_are_coherent(y1, y2):
    prior = SumProportionsPrior(GammaSumLaw(1.5, 0.25), np.array([0.5, 1.0, 2.0]))
    a = posterior(posterior(prior, y1), y2)
    b = posterior(posterior(prior, y2), y1)
    assert a.sum_law == b.sum_law == GammaSumLaw(1.5 + sum(y1) + sum(y2), 2.25)
    np.testing.assert_array_equal(a.dirichlet_alpha, b.dirichlet_alpha)
    np.testing.assert_array_equal(a.dirichlet_alpha, prior.dirichlet_alpha + np.add(y1, y2))


def test_marginal_is_product_of_negbins():
    alpha, beta, p = 1.7, 0.6, 3
    prior = independent_gamma_prior(alpha, beta, p)
    grid = np.array(list(itertools.product(range(6), repeat=p)))
    want = log_negbin_pmf(grid, alpha, beta).sum(axis=1)
    assert np.max(np.abs(log_marginal_pmf(grid, prior) - want)) <= 1e-10


def test_marginal_normalization():
    prior = SumProportionsPrior(GammaSumLaw(2, 1), np.array([1.0, 1.0]))
    grid = np.array(list(itertools.product(range(41), repeat=2)))
    assert abs(math.fsum(marginal_pmf(grid, prior)) - 1) <= 1e-6


def test_single_cell_is_gamma_poisson():
    prior = SumProportionsPrior(GammaSumLaw(2.5, 0.4), np.array([3.0]))
    y = np.arange(20)[:, None]
    np.testing.assert_allclose(log_marginal_pmf(y, prior), log_negbin_pmf(y[:, 0], 2.5, 0.4))


def test_marginal_sums_to_total_pmf():
    law = GammaSumLaw(3, 0.5)
    prior = SumProportionsPrior(law, np.array([0.7, 2.2]))
    for z in range(21):
        y = np.array([[k, z - k] for k in range(z + 1)])
        got = math.fsum(marginal_pmf(y, prior))
        assert math.isclose(got, marginal_Z_pmf(z, 3, 0.5), rel_tol=1e-12)


def test_marginal_permutation_invariance():
    rng = np.random.default_rng(3)
    for _ in range(50):
        alpha = rng.uniform(0.2, 4, 4)
        y = rng.integers(0, 10, 4)
        perm = rng.permutation(4)
        a = log_marginal_pmf(y, SumProportionsPrior(GammaSumLaw(2, 1), alpha))
        b = log_marginal_pmf(y[perm], SumProportionsPrior(GammaSumLaw(2, 1), alpha[perm]))
        assert a == pytest.approx(b, abs=1e-12)


def test_flat_law_rejected():
    prior = SumProportionsPrior(FlatSumLaw(), np.ones(2))
    with pytest.raises(ValueError):
        marginal_pmf([1, 2], prior)
    with pytest.raises(ValueError):
        sample_joint(prior, 10, 0)


def test_marginal_Z():
    z = np.arange(10_001)
    q = marginal_Z_pmf(z, 9, 0.5)
    assert abs(math.fsum(q) - 1) <= 1e-10
    assert abs(math.fsum(q * z) - 18) <= 1e-8
    for pab, beta in [(2, 1.0), (9, 0.5), (4.5, 0.1)]:
        zz = np.arange(20_000)
        q = marginal_Z_pmf(zz, pab, beta)
        assert abs(math.fsum(q * zz / (pab - 1 + zz)) - 1 / (beta + 1)) <= 1e-10


def test_sampling():
    prior = independent_gamma_prior(2.0, 0.5, 4)
    theta, y = sample_joint(prior, 200_000, 11)
    m, se = theta[:, 0].mean(), theta[:, 0].std(ddof=1) / math.sqrt(theta.shape[0])
    assert abs(m - 4.0) <= 3 * se
    pi = theta / theta.sum(axis=1, keepdims=True)
    assert np.max(np.abs(pi.sum(axis=1) - 1)) <= 1e-12
    t2, y2 = sample_joint(prior, 1000, 11)
    np.testing.assert_array_equal(t2, sample_joint(prior, 1000, 11)[0])
    np.testing.assert_array_equal(y2, sample_joint(prior, 1000, 11)[1])


def test_moment_formulas():
    alpha, beta, p = 1.5, 0.4, 5
    m = count_moments(independent_gamma_prior(alpha, beta, p))
    assert m.theta_cov == pytest.approx(0, abs=1e-14)
    assert m.theta_var == pytest.approx(alpha / beta**2)
    assert m.theta_mean == pytest.approx(alpha / beta)
    assert count_moments_from_params(2.0, 2.0, 2.0, 3).rho == 0
    with pytest.raises(ValueError):
        count_moments(SumProportionsPrior(GammaSumLaw(1, 1), np.array([1.0, 2.0])))


def test_moments_by_simulation():
    prior = SumProportionsPrior(GammaSumLaw(3, 0.5), np.full(4, 2.0))
    theory = count_moments(prior)
    theta, y = sample_joint(prior, 1_000_000, 2024)
    emp = empirical_moments(theta, y, theory.theta_mean)
    for name in ("theta_var", "theta_cov", "y_var", "y_cov", "rho", "y_corr"):
        est, se = emp[name]
        assert abs(est - getattr(theory, name)) <= 3 * se, name


def test_fit_symmetric_alpha():
    prior = SumProportionsPrior(GammaSumLaw(200, 1), np.full(6, 3.0))
    _, y = sample_joint(prior, 400, 5)
    a = fit_symmetric_alpha(y)
    assert 1.5 < a < 6
    for d in (0.9, 1.1):
        assert dirichlet_profile_loglik(a, y) >= dirichlet_profile_loglik(a * d, y)


def test_prior_parsing_and_matrix_priors():
    prior = prior_from_dict({"sum_law": {"kind": "gamma", "alpha0": 2, "beta0": 1}, "alpha": [1, 2]})
    assert prior.p == 2 and prior.sum_law.alpha0 == 2
    with pytest.raises(ValueError):
        prior_from_dict({"alpha": [1]})
    rows = time_dependence_priors([1.0, 2.0], 0.5, p=3)
    assert [r.sum_law.alpha0 for r in rows] == [3.0, 6.0] and rows[0].p == 3
    cols = process_dependence_priors([1.0, 2.0, 0.5], [1, 2, 3], k=4)
    assert len(cols) == 3 and cols[2].sum_law == GammaSumLaw(2.0, 3.0) and cols[0].p == 4


def test_log_negbin_matches_definition():
    y = np.arange(30)
    shape, rate = 2.3, 0.8
    want = (gammaln(shape + y) - gammaln(shape) - gammaln(y + 1)
            + shape * np.log(rate / (1 + rate)) - y * np.log(1 + rate))
    np.testing.assert_allclose(log_negbin_pmf(y, shape, rate), want, atol=1e-12)
