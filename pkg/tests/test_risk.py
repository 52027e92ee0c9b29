import itertools
import json
import math

import numpy as np
import pytest
from scipy.stats import poisson

from poisson_shrink.bayes import HyperPrior, hierarchical_psi
from poisson_shrink.core import QuadraticForm, WeightedLc, build_cumulative_matrix, build_sum_penalty_matrix
from poisson_shrink.risk import (RiskCurve, appendix_identity_check, careful_D0, d_star,
                                 dominance_check_quad, dominance_check_theorem2, eb_risk_terms,
                                 h0_eb, identity_rhs, mbr_gamma, mc_risk, mc_risk_difference,
                                 phi_delta_c, risk_bayes_gamma_L1, risk_careful_shrink,
                                 risk_delta_c_closed, risk_eb, risk_mean_shrink,
                                 risk_shrink_family)
from poisson_shrink.shrinkers import delta_c, mean_shrink_careful, quad_dominator
from poisson_shrink.specs import EstimatorSpec, series_risk

CZ_P2_GAMMA1 = 1.103638323514327
MEAN_SHRINK_P3_B2_GAMMA5 = -0.9250716714138467


# ----------------------------------------------------------------- series risks

def test_zero_phi_has_minimax_risk():
    for p, c in [(2, 0.0), (9, 3.0)]:
        assert risk_shrink_family(lambda z: np.zeros(np.shape(z)), p, c, 4.0) == p + c


@pytest.mark.parametrize("gamma", [0.5, 2, 10, 50])
def test_family_matches_closed_form(gamma):
    assert abs(risk_shrink_family(phi_delta_c(9, 3), 9, 3, gamma) - risk_delta_c_closed(9, 3, gamma)) <= 1e-9


def test_cz_golden():
    r = risk_shrink_family(phi_delta_c(2, 0), 2, 0, 1.0)
    assert r < 2
    assert r == pytest.approx(CZ_P2_GAMMA1, abs=1e-12)


def test_delta_c_closed_examples():
    assert risk_delta_c_closed(9, 3, 1e-7) == pytest.approx(16 / 12, abs=1e-5)
    assert abs(risk_delta_c_closed(9, 3, 200) - 12) <= 0.2
    grid = [0.01, 0.1, 1, 3, 10, 30, 100]
    vals = [risk_delta_c_closed(9, 3, g) for g in grid]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_delta_c_dominates_on_grid():
    for p in range(2, 10):
        for c in (0, 1, 3):
            for g in np.logspace(-3, 3, 13):
                assert risk_shrink_family(phi_delta_c(p, c), p, c, g) < p + c


def test_d_star_vectorized():
    z = np.arange(5)
    vals = d_star(phi_delta_c(4, 1), 4, 1, z)
    single = [float(d_star(phi_delta_c(4, 1), 4, 1, k)) for k in z]
    np.testing.assert_allclose(vals, single)


def test_risk_depends_on_theta_only_through_sum():
    loss = WeightedLc(3.0)
    est = lambda y: delta_c(y, 3.0)
    thetas = [np.full(9, 1.0), np.array([5, 1, 1, .5, .5, .25, .25, .25, .25]), np.r_[8.0, np.full(8, .125)]]
    res = [mc_risk(est, loss, t, 200_000, seed=4) for t in thetas]
    exact = risk_delta_c_closed(9, 3, 9.0)
    for r in res:
        assert r.within(exact)
    for a, b in itertools.combinations(res, 2):
        assert abs(a.mean - b.mean) <= 3 * math.hypot(a.se, b.se)


def test_mc_risk_examples():
    theta = np.array([1, 2, 0.5, 3, 0.5])
    assert mc_risk(EstimatorSpec("mle"), WeightedLc(2.0), theta, 100_000, 1).within(7.0)
    r = mc_risk(EstimatorSpec("delta_c", {"c": 2}), WeightedLc(2.0), theta, 400_000, 1)
    assert r.within(risk_shrink_family(phi_delta_c(5, 2), 5, 2, 7.0))
    assert r == mc_risk(EstimatorSpec("delta_c", {"c": 2}), WeightedLc(2.0), theta, 400_000, 1)


# ------------------------------------------------------------- mean smoothing

def g_mean_shrink(p, b0):
    return lambda z: (p - 1) / (p - 1 + (b0 - 1) * np.asarray(z, dtype=float))


def test_mean_shrink_zero_g():
    assert risk_mean_shrink(lambda z: np.zeros(np.shape(z)), 4, 3.0, 4.0) == 0


@pytest.mark.parametrize("gamma", [1, 5, 20])
def test_mean_shrink_bound(gamma):
    from poisson_shrink.series import poisson_expectation
    p, b0 = 4, 1.75
    d = risk_mean_shrink(g_mean_shrink(p, b0), p, gamma, p * b0)
    bound = -poisson_expectation(lambda z: (p - 1) ** 2 / (p - 1 + (b0 - 1) * (z + 1)), gamma)
    assert d <= bound + 1e-12


def test_mean_shrink_uniform_negative_and_matches_mc():
    p, b0, gamma = 3, 2.0, 5.0
    d = risk_mean_shrink(g_mean_shrink(p, b0), p, gamma, p)
    assert d < 0
    assert d == pytest.approx(MEAN_SHRINK_P3_B2_GAMMA5, abs=1e-12)
    r = mc_risk_difference(EstimatorSpec("mean_shrink_b0", {"b0": b0}), EstimatorSpec("mle"),
                           WeightedLc(0.0), np.full(p, gamma / p), 400_000, 8)
    assert r.within(d)
    with pytest.raises(ValueError):
        risk_mean_shrink(g_mean_shrink(p, b0), p, gamma, p - 0.5)


def test_mean_shrink_nonuniform_matches_mc():
    theta = np.array([0.5, 1.5, 3.0, 1.0])
    pi = theta / theta.sum()
    spec = EstimatorSpec("mean_shrink_b0", {"b0": 2.5})
    exact = series_risk(spec, 4, 0.0, theta.sum(), pi)
    assert mc_risk(spec, WeightedLc(0.0), theta, 400_000, 12).within(exact)


# --------------------------------------------------------------- careful smoother

def test_D0_zero_for_several_zeros():
    p = 5
    for y in itertools.product(range(4), repeat=p):
        y = np.array(y)
        if 2 <= (y == 0).sum() <= p - 1:
            assert careful_D0(y) == 0


def test_D0_enumeration_matches_mc():
    theta = np.array([0.7, 2.0, 3.0])
    top = 40
    axes = [np.arange(top)] * 3
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)
    w = np.prod(poisson.pmf(grid, theta), axis=1)
    exact = 3 + math.fsum(w * careful_D0(grid))
    mc = risk_careful_shrink(3, theta, 1_000_000, seed=5)
    assert mc.within(exact)


def test_careful_examples():
    r = risk_careful_shrink(5, np.full(5, 5.0), 1_000_000, seed=1)
    assert r.mean < 5 - 3 * r.se
    r = risk_careful_shrink(5, np.full(5, 50.0), 1_000_000, seed=1)
    assert r.within(5)
    with pytest.raises(ValueError):
        risk_careful_shrink(5, np.full(5, 5.0), 500, seed=1)


# ------------------------------------------------------------------ empirical Bayes

@pytest.mark.parametrize("gamma", [0.3, 3, 30])
def test_eb_uniform_shapes_match_delta0(gamma):
    p = 6
    r = risk_eb(h0_eb(p), p, np.ones(p), np.full(p, gamma / p))
    assert abs(r - risk_delta_c_closed(p, 0, gamma)) <= 1e-8


def test_eb_no_shrinkage_gives_p():
    p = 5
    one = lambda z: (np.asarray(z) >= 1).astype(float)
    assert risk_eb(one, p, np.ones(p), np.full(p, 0.8)) == pytest.approx(p, abs=1e-9)
    with pytest.raises(ValueError):
        risk_eb(lambda z: np.ones(np.shape(z)), p, np.ones(p), np.full(p, 0.8))


def test_eb_m_terms_increase_to_one():
    p, alpha = 6, np.full(6, 1.5)
    prev = (0.0, 0.0)
    for gamma in (0.1, 1, 10, 100, 3000):
        t = eb_risk_terms(h0_eb(alpha.sum()), p, alpha, np.full(p, gamma / p))
        assert 0 < t["m1"] < 1 and 0 < t["m2"] < 1
        assert t["m1"] > prev[0] and t["m2"] > prev[1]
        prev = (t["m1"], t["m2"])
    assert prev[0] > 0.99 and prev[1] > 0.99


def test_eb_risk_matches_mc():
    alpha = np.array([1.0, 2.0, 1.5, 3.0])
    theta = np.array([0.8, 2.5, 1.2, 4.0])
    exact = risk_eb(h0_eb(alpha.sum()), 4, alpha, theta)
    r = mc_risk(EstimatorSpec("eb", {"alpha": alpha.tolist(), "c": 0}), WeightedLc(0), theta, 600_000, 21)
    assert r.within(exact)


# -------------------------------------------------------------- Bayes-gamma and MBR

def test_bayes_gamma_closed_form():
    alpha, beta = np.array([2.0, 3.0, 1.5]), 0.5
    center = (alpha - 1) / beta
    r = risk_bayes_gamma_L1(alpha, beta, center)
    assert r.risk == pytest.approx(3 / 1.5**2) and r.A == pytest.approx(0)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        th = rng.gamma(1.0, 3.0, 3) + 1e-3
        r = risk_bayes_gamma_L1(alpha, beta, th)
        assert r.dominates == (r.risk <= 3 + 1e-12)


def test_bayes_gamma_prior_mean_of_A():
    alpha, beta = np.array([2.0, 3.0, 1.5, 4.0]), 0.7
    rng = np.random.default_rng(1)
    draws = rng.gamma(alpha, 1 / beta, size=(200_000, 4))
    A = ((alpha - 1 - beta * draws) ** 2 / (beta * draws)).mean(axis=1)
    assert abs(A.mean() - 1) <= 3 * A.std(ddof=1) / math.sqrt(A.size)


def test_bayes_gamma_matches_mc():
    alpha, beta = np.array([2.0, 1.5, 3.0]), 0.8
    theta = np.array([1.0, 2.0, 0.5])
    exact = risk_bayes_gamma_L1(alpha, beta, theta).risk
    spec = EstimatorSpec("bayes_gamma", {"alpha": alpha.tolist(), "beta": beta})
    assert mc_risk(spec, WeightedLc(0), theta, 400_000, 3).within(exact)


def test_mbr():
    assert mbr_gamma(9, 3, 1e6) < 1e-4 * 12
    vals = [mbr_gamma(9, 3, b) for b in (1, 0.1, 0.01, 0.001)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert all(v <= 12 for v in vals)
    assert abs(mbr_gamma(9, 3, 1e-4) - 12) <= 0.05


def test_mbr_matches_prior_average_of_bayes_risk():
    # Bayes risk of the Bayes rule equals the prior mean of its L_c loss
    from poisson_shrink.bayes import GammaPriorVec, bayes_gamma
    p, c, beta = 3, 1.0, 0.5
    rng = np.random.default_rng(2)
    theta = rng.gamma(1.0, 1 / beta, size=(400_000, p))
    y = rng.poisson(theta)
    est = bayes_gamma(y, GammaPriorVec(np.ones(p), beta), c)
    loss = WeightedLc(c).evaluate(theta, est)
    se = loss.std(ddof=1) / math.sqrt(loss.size)
    assert abs(loss.mean() - mbr_gamma(p, c, beta)) <= 3 * se


# ---------------------------------------------------------------- identity check

def test_identity_rhs_matches_closed_form():
    assert abs(identity_rhs(9, 3, 5.0, lambda z: z) - risk_delta_c_closed(9, 3, 5.0)) <= 1e-9


def test_identity_oracle_kappa():
    p, c, g = 9, 3.0, 5.0
    from poisson_shrink.series import poisson_expectation
    want = poisson_expectation(lambda z: (p - 1) * (1 + c) * g / (p - 1 + (1 + c) * z), g)
    got = identity_rhs(p, c, g, lambda z: np.full(np.shape(z), g))
    assert got == pytest.approx(want, rel=1e-12) and got > 0


def test_identity_mc():
    chk = appendix_identity_check(9, 3, 5.0, lambda z: z, n=1_000_000, seed=0)
    assert chk.within(3)
    chk = appendix_identity_check(4, 1, 3.0, lambda z: np.sqrt(z + 1), n=400_000, seed=2,
                                  theta=[0.2, 0.8, 1.0, 1.0])
    assert chk.within(3)


# ------------------------------------------------------------------ verifiers

def test_shrink_conditions_delta_c_pass():
    for p, c in [(2, 0), (3, 1), (9, 3), (5, 10)]:
        assert dominance_check_theorem2(phi_delta_c(p, c), p, c, 2000).passed


def test_shrink_conditions_cz_fail_for_large_c():
    rep = dominance_check_theorem2(phi_delta_c(9, 0), 9, 2.0, 10_000)
    assert not rep.condition("upper_bound").passed
    assert rep.condition("upper_bound").worst_at > 9
    assert dominance_check_theorem2(phi_delta_c(9, 0), 9, 1.0, 10_000).passed


def test_shrink_conditions_robustness_boundary():
    assert dominance_check_theorem2(phi_delta_c(9, 1), 9, 3.0, 10_000).passed
    assert not dominance_check_theorem2(phi_delta_c(9, 1), 9, 3.2, 10_000).passed


def test_shrink_conditions_hierarchical_boundary():
    p, c = 9, 3.0
    h = HyperPrior((p - 2 - c) / (1 + c), 1.0)
    phi = lambda z: hierarchical_psi(z, p, h, c) / (p - 1 + (1 + c) * np.asarray(z, float))
    assert dominance_check_theorem2(phi, p, c, 10_000).passed


def test_shrink_conditions_report_serializes():
    rep = dominance_check_theorem2(phi_delta_c(4, 0), 4, 0, 100)
    d = json.loads(json.dumps(rep.to_dict()))
    assert d["passed"] and len(d["conditions"]) == 4
    with pytest.raises(ValueError):
        dominance_check_theorem2(phi_delta_c(4, 0), 4, 0, 5)


def test_quad_examples():
    assert dominance_check_quad(3, np.eye(3), 5, "geq1").violations == 0
    rep = dominance_check_quad(3, np.eye(3), 5, "leq1")
    assert rep.violations > 0 and rep.sup_slack > 0 and rep.worst
    A0 = build_sum_penalty_matrix(4, 1.0)
    assert dominance_check_quad(4, A0, 4, "geq1").passed
    assert dominance_check_quad(4, build_cumulative_matrix(4), 4).passed
    with pytest.raises(ValueError):
        dominance_check_quad(8, np.eye(8), 20)


def test_quad_mc_difference_negative():
    A0 = build_sum_penalty_matrix(4, 1.0)
    loss = QuadraticForm(A0)
    d = mc_risk_difference(lambda y: quad_dominator(y, A0), lambda y: np.asarray(y, float),
                           loss, np.ones(4), 400_000, seed=6)
    assert d.mean < -3 * d.se


# ------------------------------------------------------------------ risk curves

def test_risk_curve_round_trip():
    spec = EstimatorSpec("delta_c", {"c": 3}).to_dict()
    grid = np.array([0.1, 1.0, 10.0])
    curve = RiskCurve(grid, np.array([risk_delta_c_closed(9, 3, g) for g in grid]),
                      spec, WeightedLc(3.0).to_dict(), "exact-series")
    again = RiskCurve.from_dict(json.loads(curve.to_json()))
    np.testing.assert_array_equal(again.risk_values, curve.risk_values)
    lines = curve.to_csv().splitlines()
    assert lines[0] == "gamma,risk,se_or_zero" and len(lines) == 4
    with pytest.raises(ValueError):
        RiskCurve(grid[::-1], grid, spec, WeightedLc(3.0), "exact-series")
    with pytest.raises(ValueError):
        RiskCurve(grid, grid, spec, WeightedLc(3.0), "monte-carlo")
