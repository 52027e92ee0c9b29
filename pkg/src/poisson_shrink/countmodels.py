"""Sum-times-proportions priors and the count models they induce.

The rates are written ``theta = gamma * pi`` with the sum ``gamma`` and the
proportions ``pi`` independent a priori. A Dirichlet on ``pi`` stays Dirichlet
after observing Poisson counts, whatever the law of ``gamma``. Probabilities
are computed in log space and exponentiated only on return.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from .core import check_counts


@dataclass(frozen=True)
class FlatSumLaw:
    """Improper flat density on the half line; ``K(z) = z!``."""

    kind = "flat"
    proper = False

    def k_ratio(self, z: Any) -> Any:
        return z

    def log_k(self, z: Any) -> np.ndarray:
        return gammaln(np.asarray(z, dtype=float) + 1)

    def posterior(self, z: int) -> "GammaSumLaw":
        return GammaSumLaw(z + 1, 1)

    def to_dict(self) -> dict:
        return {"kind": "flat"}


@dataclass(frozen=True)
class GammaSumLaw:
    """Gamma(shape ``alpha0``, rate ``beta0``) law for the sum ``gamma``."""

    alpha0: float
    beta0: float
    kind = "gamma"
    proper = True

    def __post_init__(self) -> None:
        if self.alpha0 <= 0 or self.beta0 <= 0:
            raise ValueError("Gamma sum law needs alpha0 > 0 and beta0 > 0")

    def k_ratio(self, z: Any) -> Any:
        """``K(z)/K(z-1) = (alpha0 + z - 1)/(beta0 + 1)``."""
        return (self.alpha0 + z - 1) / (self.beta0 + 1)

    def log_k(self, z: Any) -> np.ndarray:
        """``log int gamma^z e^{-gamma} q(gamma) dgamma``."""
        z = np.asarray(z, dtype=float)
        a, b = self.alpha0, self.beta0
        return a * np.log(b) + gammaln(a + z) - gammaln(a) - (a + z) * np.log1p(b)

    def posterior(self, z: int) -> "GammaSumLaw":
        return GammaSumLaw(self.alpha0 + z, self.beta0 + 1)

    @property
    def mean(self) -> float:
        return self.alpha0 / self.beta0

    @property
    def variance(self) -> float:
        return self.alpha0 / self.beta0**2

    def to_dict(self) -> dict:
        return {"kind": "gamma", "alpha0": self.alpha0, "beta0": self.beta0}


SumLaw = FlatSumLaw | GammaSumLaw


@dataclass(frozen=True)
class SumProportionsPrior:
    sum_law: SumLaw
    dirichlet_alpha: np.ndarray

    def __post_init__(self) -> None:
        alpha = np.array(self.dirichlet_alpha, dtype=float)
        if alpha.ndim != 1 or alpha.size < 1 or np.any(alpha <= 0):
            raise ValueError("Dirichlet parameters must be a vector of positive reals")
        alpha.setflags(write=False)
        object.__setattr__(self, "dirichlet_alpha", alpha)

    @property
    def p(self) -> int:
        return self.dirichlet_alpha.size

    @property
    def symmetric(self) -> bool:
        return bool(np.all(self.dirichlet_alpha == self.dirichlet_alpha[0]))

    def to_dict(self) -> dict:
        return {"sum_law": self.sum_law.to_dict(), "alpha": self.dirichlet_alpha.tolist()}


def sum_law_from_dict(d: Mapping) -> SumLaw:
    kind = d.get("kind")
    if kind == "flat":
        return FlatSumLaw()
    if kind == "gamma":
        return GammaSumLaw(float(d["alpha0"]), float(d["beta0"]))
    raise ValueError(f"unknown sum law {kind!r}")


def prior_from_dict(d: Mapping) -> SumProportionsPrior:
    """Parse ``{"sum_law": {...}, "alpha": [...]}``."""
    if "sum_law" not in d or "alpha" not in d:
        raise ValueError("prior spec needs 'sum_law' and 'alpha'")
    return SumProportionsPrior(sum_law_from_dict(d["sum_law"]), np.asarray(d["alpha"], dtype=float))


def independent_gamma_prior(alpha: float, beta: float, p: int) -> SumProportionsPrior:
    """Independent Gamma(alpha, beta) rates, written as sum times proportions."""
    return SumProportionsPrior(GammaSumLaw(p * alpha, beta), np.full(p, float(alpha)))


# ---------------------------------------------------------------------------
# Sampling


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def sample_joint(prior: SumProportionsPrior, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` pairs ``(theta, y)`` from the prior and Poisson likelihood.

    ``gamma ~ Gamma(alpha0, beta0)``, ``pi`` is Dirichlet via normalized Gamma
    variates, ``theta = gamma * pi`` and ``y_i ~ Poisson(theta_i)``.
    Returns two ``(n, p)`` arrays; identical seeds give identical draws.
    """
    if not prior.sum_law.proper:
        raise ValueError("cannot sample from an improper (flat) sum law")
    if n < 0:
        raise ValueError("n must be nonnegative")
    rng = _rng(seed)
    law = prior.sum_law
    gamma = rng.gamma(law.alpha0, 1.0 / law.beta0, size=n)
    g = rng.standard_gamma(prior.dirichlet_alpha, size=(n, prior.p))
    pi = g / g.sum(axis=1, keepdims=True)
    theta = gamma[:, None] * pi
    y = rng.poisson(theta)
    return theta, y


# ---------------------------------------------------------------------------
# Posterior and marginals


def posterior(prior: SumProportionsPrior, y: Any) -> SumProportionsPrior:
    """Conjugate update: ``alpha -> alpha + y`` and the sum law absorbs ``Z``."""
    y = check_counts(y)
    if y.shape != (prior.p,):
        raise ValueError("count vector length differs from the prior dimension")
    z = int(y.sum())
    return SumProportionsPrior(prior.sum_law.posterior(z), prior.dirichlet_alpha + y)


def log_marginal_pmf(y: Any, prior: SumProportionsPrior) -> np.ndarray:
    """Log of the marginal probability of the count vector(s) ``y``.

    ``y`` may be ``(p,)`` or ``(n, p)``.
    """
    if not prior.sum_law.proper:
        raise ValueError("the flat sum law gives an improper marginal")
    y = check_counts(y).astype(float)
    alpha = prior.dirichlet_alpha
    if y.shape[-1] != alpha.size:
        raise ValueError("count vector length differs from the prior dimension")
    z = y.sum(axis=-1)
    a_sum = alpha.sum()
    return (prior.sum_law.log_k(z)
            + gammaln(a_sum) - gammaln(alpha).sum()
            + gammaln(alpha + y).sum(axis=-1) - gammaln(a_sum + z)
            - gammaln(y + 1).sum(axis=-1))


def marginal_pmf(y: Any, prior: SumProportionsPrior) -> Any:
    return np.exp(log_marginal_pmf(y, prior))


def log_negbin_pmf(y: Any, shape: Any, rate: float) -> np.ndarray:
    """Gamma(shape, rate)-mixed Poisson pmf, in logs."""
    y = np.asarray(y, dtype=float)
    return (shape * np.log(rate) + gammaln(shape + y) - gammaln(shape)
            - gammaln(y + 1) - (shape + y) * np.log1p(rate))


def marginal_Z_pmf(z: Any, p_alpha_bar: float, beta: float) -> Any:
    """Marginal pmf of the total when ``gamma ~ Gamma(p_alpha_bar, beta)``."""
    if p_alpha_bar <= 0 or beta <= 0:
        raise ValueError("need p_alpha_bar > 0 and beta > 0")
    return np.exp(log_negbin_pmf(z, p_alpha_bar, beta))


# ---------------------------------------------------------------------------
# Moments of the symmetric model


@dataclass(frozen=True)
class CountMoments:
    theta_mean: float
    theta_var: float
    theta_cov: float
    rho: float
    y_var: float
    y_cov: float
    y_corr: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def count_moments_from_params(theta0: float, tau0_sq: float, alpha: float, p: int) -> CountMoments:
    """Moments when ``E gamma = p theta0``, ``Var gamma = p tau0^2`` and the
    proportions are symmetric Dirichlet(alpha)."""
    var = theta0**2 * (p - 1) / (p * alpha + 1) + tau0_sq * (alpha + 1) / (p * alpha + 1)
    cov = (alpha * tau0_sq - theta0**2) / (p * alpha + 1)
    rho = (alpha * tau0_sq - theta0**2) / ((alpha + 1) * tau0_sq + (p - 1) * theta0**2)
    y_var = theta0 + var
    return CountMoments(theta0, var, cov, rho, y_var, rho * var, rho * var / y_var)


def count_moments(prior: SumProportionsPrior) -> CountMoments:
    if not prior.symmetric:
        raise ValueError("moment formulas need a symmetric Dirichlet")
    if not isinstance(prior.sum_law, GammaSumLaw):
        raise ValueError("moment formulas need a proper Gamma sum law")
    p = prior.p
    law = prior.sum_law
    return count_moments_from_params(law.mean / p, law.variance / p,
                                     float(prior.dirichlet_alpha[0]), p)


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def empirical_moments(theta: np.ndarray, y: np.ndarray, theta0: float) -> dict[str, tuple[float, float]]:
    """Moment estimates with standard errors from ``(n, p)`` joint draws.

    Each draw contributes one unbiased statistic per moment, centred at the
    known mean ``theta0``: the average squared deviation for variances and
    the average cross-product over pairs ``i != j`` for covariances. Draws
    are independent, so the standard error is the usual one for a mean.
    Ratios (``rho``, ``y_corr``) get delta-method standard errors.
    """
    theta = np.asarray(theta, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = theta.shape
    if n < 2 or p < 2:
        raise ValueError("need at least two draws and p >= 2")

    def var_cov(x):
        d = x - theta0
        sq = (d * d).mean(axis=1)
        cross = (d.sum(axis=1) ** 2 - (d * d).sum(axis=1)) / (p * (p - 1))
        return sq, cross

    tv, tc = var_cov(theta)
    yv, yc = var_cov(y)
    out = {"theta_mean": _mean_se(theta.mean(axis=1)), "theta_var": _mean_se(tv),
           "theta_cov": _mean_se(tc), "y_var": _mean_se(yv), "y_cov": _mean_se(yc)}
    for name, num, den in (("rho", tc, tv), ("y_corr", yc, yv)):
        r = num.mean() / den.mean()
        resid = (num - r * den) / den.mean()
        out[name] = (float(r), float(resid.std(ddof=1) / np.sqrt(n)))
    return out


# ---------------------------------------------------------------------------
# Symmetric Dirichlet concentration from data


def dirichlet_profile_loglik(alpha: float, y: Any) -> float:
    """Log-likelihood of symmetric ``alpha`` from the proportions part of the
    marginal (the sum-law factor does not involve ``alpha``)."""
    y = check_counts(y).astype(float)
    p = y.shape[-1]
    z = y.sum(axis=-1)
    ll = (gammaln(p * alpha) - p * gammaln(alpha)
          + gammaln(alpha + y).sum(axis=-1) - gammaln(p * alpha + z))
    return float(np.sum(ll))


def fit_symmetric_alpha(y: Any, lower: float = 1e-3, upper: float = 1e4) -> float:
    """Maximize the profile likelihood over ``log(alpha)`` in ``[lower, upper]``."""
    res = minimize_scalar(lambda t: -dirichlet_profile_loglik(np.exp(t), y),
                          bounds=(np.log(lower), np.log(upper)), method="bounded",
                          options={"xatol": 1e-10})
    return float(np.exp(res.x))


# ---------------------------------------------------------------------------
# Priors over a k x p matrix of rates


def time_dependence_priors(alpha: Any, beta: Any, p: int) -> list[SumProportionsPrior]:
    """One prior per process (row): ``gamma_i ~ Gamma(p alpha_i, beta_i)`` and
    symmetric Dirichlet(alpha_i) over its ``p`` time cells."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    beta = np.broadcast_to(np.asarray(beta, dtype=float), alpha.shape)
    return [SumProportionsPrior(GammaSumLaw(p * a, b), np.full(p, a)) for a, b in zip(alpha, beta)]


def process_dependence_priors(alpha: Any, beta: Any, k: int) -> list[SumProportionsPrior]:
    """One prior per time cell (column): ``kappa_j ~ Gamma(k alpha_j, beta_j)``
    shared out over the ``k`` processes by a symmetric Dirichlet(alpha_j)."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    beta = np.broadcast_to(np.asarray(beta, dtype=float), alpha.shape)
    return [SumProportionsPrior(GammaSumLaw(k * a, b), np.full(k, a)) for a, b in zip(alpha, beta)]
