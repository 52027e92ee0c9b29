"""Bayes, hierarchical and empirical Bayes estimators under the L_c loss."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

import numpy as np
from scipy import integrate

from .core import as_array, check_counts, is_exact
from .countmodels import FlatSumLaw, GammaSumLaw


@dataclass(frozen=True)
class GammaPriorVec:
    """Independent ``theta_i ~ Gamma(alpha_i, beta)`` (rate parametrization)."""

    alpha: Any
    beta: float

    def __post_init__(self) -> None:
        alpha = as_array(self.alpha)
        if alpha.ndim != 1 or alpha.size < 1 or np.any(alpha <= 0):
            raise ValueError("shapes must be a vector of positive reals")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        object.__setattr__(self, "alpha", alpha)

    @property
    def alpha_bar(self) -> Any:
        return sum(self.alpha) / len(self.alpha)


@dataclass(frozen=True)
class HyperPrior:
    """Density ``s(beta) ~ beta^(eta-1) (beta+1)^-(eta+zeta)`` on the Gamma rate."""

    eta: float
    zeta: float

    def __post_init__(self) -> None:
        if self.eta <= 0 or self.zeta <= 0:
            raise ValueError("eta and zeta must be positive")

    def eta_bound(self, p: int, c: float) -> float:
        return (p - 2 - c) / (1 + c)


@dataclass(frozen=True)
class PosteriorMoments:
    """Harmonic posterior means ``a_i = 1/E(1/theta_i | y)`` and ``b = 1/E(1/gamma | y)``."""

    a_i: Any
    b: float

    @property
    def a(self) -> Any:
        return sum(as_array(self.a_i))


def bayes_general_Lc(m: PosteriorMoments, c: float) -> np.ndarray:
    """Minimizer of the posterior expected L_c loss: ``(1+c)/(1+c a/b) * a_i``.

    A zero ``a_i`` (infinite posterior inverse moment) gives a zero estimate.
    """
    a_i = as_array(m.a_i)
    if c == 0:
        return a_i.copy()
    a = sum(a_i)
    if a == 0:
        return a_i * 0
    if not m.b > 0:
        raise ValueError("b must be positive when some a_i > 0")
    return (1 + c) / (1 + c * a / m.b) * a_i


def _data(y: Any) -> np.ndarray:
    arr = np.asarray(y)
    if arr.dtype != object:
        check_counts(arr)
    arr = as_array(arr)
    if arr.shape[-1] < 2:
        raise ValueError("need p >= 2")
    return arr


def _zero_rule(base: np.ndarray) -> np.ndarray:
    """Clamp ``alpha_i + y_i - 1`` at zero (only negative when alpha_i < 1, y_i = 0)."""
    if base.dtype == object:
        return np.array([max(v, 0) for v in base.flat], dtype=object).reshape(base.shape)
    return np.maximum(base, 0.0)


def _shapes(alpha: Any, p: int, exact: bool) -> np.ndarray:
    alpha = np.broadcast_to(as_array(alpha), (p,))
    if exact and alpha.dtype != object:
        alpha = np.array([Fraction(float(v)) for v in alpha], dtype=object)
    return alpha


def bayes_gamma(y: Any, prior: GammaPriorVec, c: float = 0.0) -> np.ndarray:
    """Bayes estimate under independent Gamma priors and L_c loss.

    ``h_c(Z) (alpha_i + y_i - 1)/(beta + 1)`` with
    ``h_c(z) = (1+c)(p abar + z - 1) / [(1+c)(p abar + z - 1) - c(p-1)]``.
    """
    y = _data(y)
    p = y.shape[-1]
    alpha = _shapes(prior.alpha, p, is_exact(y))
    z = y.sum(axis=-1, keepdims=True)
    s = sum(alpha) + z - 1
    denom = (1 + c) * s - c * (p - 1)
    if np.any(denom <= 0):
        raise ValueError("nonpositive denominator in the Bayes weight")
    h = (1 + c) * s / denom
    return h * _zero_rule(alpha + y - 1) / (prior.beta + 1)


def bayes_sum_dirichlet(y: Any, c: float, sum_law: FlatSumLaw | GammaSumLaw) -> np.ndarray:
    """Bayes estimate with uniform Dirichlet proportions and a given sum law.

    ``[K(Z)/K(Z-1)] (1+c)/(p-1+(1+c)Z) * y_i``. The flat law gives ``delta_c``.
    """
    y = _data(y)
    p = y.shape[-1]
    z = y.sum(axis=-1, keepdims=True)
    ratio = sum_law.k_ratio(z)
    return ratio * (1 + c) / (p - 1 + (1 + c) * z) * y


def hierarchical_psi(z: Any, p: int, h: HyperPrior, c: float) -> np.ndarray:
    """Shrinkage function ``psi(z)`` induced by the hierarchical estimator."""
    z = np.asarray(z, dtype=float)
    return (1 + c) * (p - 1 + z) * (p + h.eta) / (p - 1 + h.eta + h.zeta + z) - c * (p - 1)


def hierarchical_sup_psi(p: int, h: HyperPrior, c: float) -> float:
    """Limit of ``hierarchical_psi`` as ``z -> inf`` (its supremum, psi increases)."""
    return (1 + c) * (p + h.eta) - c * (p - 1)


def hierarchical_is_dominating(p: int, h: HyperPrior, c: float) -> bool:
    """True when the induced psi lies in ``(0, 2(p-1))`` for every ``z >= 1``.

    Equivalent to ``eta <= (p-2-c)/(1+c)`` plus positivity at ``z = 1``.
    """
    return bool(h.eta <= h.eta_bound(p, c) and hierarchical_psi(1, p, h, c) > 0)


def hierarchical_bayes(y: Any, h: HyperPrior, c: float = 0.0) -> np.ndarray:
    """Bayes estimate with Gamma(1, beta) rates and the hyperprior on ``beta``.

    The factor ``(z + zeta - 1)`` is negative only when ``z = 0`` and
    ``zeta < 1``, where the counts are all zero and so is the estimate.
    """
    y = _data(y)
    p = y.shape[-1]
    z = y.sum(axis=-1, keepdims=True)
    lead = (1 + c) * (p - 1 + z) / (p - 1 + (1 + c) * z)
    post = (z + h.zeta - 1) / (p + h.eta + h.zeta + z - 1)
    return lead * post * y


def empirical_bayes(y: Any, alpha: Any, c: float = 0.0) -> np.ndarray:
    """Gamma-prior Bayes rule with ``1/(beta+1)`` replaced by ``Z/(p abar - 1 + Z)``.

    Returns ``h_c(Z) (alpha_i + Y_i - 1)`` with
    ``h_c(z) = (1+c) z / [(1+c)(p abar + z - 1) - c(p-1)]``; all-zero data map
    to zero.
    """
    y = _data(y)
    p = y.shape[-1]
    exact = is_exact(y) or is_exact(alpha)
    alpha = _shapes(alpha, p, exact)
    if exact and y.dtype != object:
        y = np.array([Fraction(int(v)) for v in y.flat], dtype=object).reshape(y.shape)
    z = y.sum(axis=-1, keepdims=True)
    denom = (1 + c) * (sum(alpha) + z - 1) - c * (p - 1)
    if np.any((denom <= 0) & (z > 0)):
        raise ValueError("nonpositive denominator in the empirical Bayes weight")
    safe = np.where(z > 0, denom, 1)
    h = np.where(z > 0, (1 + c) * z / safe, 0)
    return h * _zero_rule(alpha + y - 1)


def bayes_matrix(Y: Any, alpha_cols: Any, row_priors: Any, c: float = 0.0, *,
                 column_numerator: str = "pooled") -> np.ndarray:
    """Bayes estimate for a ``k x p`` count matrix with shared proportions.

    One Dirichlet(alpha_cols) draw is shared by all rows and the row totals
    have independent Gamma(alpha0_i, beta0_i) priors. ``row_priors`` is a
    sequence of ``(alpha0_i, beta0_i)`` pairs.

    ``column_numerator="pooled"`` uses ``p abar + Z_j - 1`` in the column
    factor with the closed-form weight. ``"posterior"`` is the exact Bayes
    rule under this prior: the column factor uses ``alpha_j + Z_j - 1`` and,
    for ``c > 0``, the inverse moment of the posterior total (a sum of
    independent gammas) is computed by one-dimensional quadrature. The
    default keeps the pooled form so the frequentist matrix shrinker is its
    unit-shape analogue.
    """
    Y = np.asarray(Y)
    check_counts(Y)
    Y = Y.astype(float)
    if Y.ndim != 2:
        raise ValueError("expected a k x p matrix")
    k, p = Y.shape
    alpha = np.broadcast_to(np.asarray(alpha_cols, dtype=float), (p,))
    rp = np.asarray(row_priors, dtype=float).reshape(k, 2)
    a0, b0 = rp[:, 0], rp[:, 1]
    zj = Y.sum(axis=0)
    z = Y.sum()
    s = alpha.sum()
    row = np.maximum(a0 + Y.sum(axis=1) - 1, 0.0) / (b0 + 1)
    if column_numerator == "posterior":
        if s + z <= 1:
            raise ValueError("posterior inverse moment of the proportions is infinite")
        a_ij = row[:, None] * (np.maximum(alpha + zj - 1, 0.0) / (s + z - 1))[None, :]
        if c == 0 or not a_ij.any():
            return a_ij
        return bayes_general_Lc(PosteriorMoments(a_ij.ravel(), _inv_mean_gamma_sum(
            a0 + Y.sum(axis=1), b0 + 1)), c).reshape(k, p)
    if column_numerator != "pooled":
        raise ValueError(f"unknown column_numerator {column_numerator!r}")
    denom = (1 + c) * (s + z - 1) - c * (p - 1)
    if denom <= 0:
        raise ValueError("nonpositive denominator in the Bayes weight")
    col = (1 + c) * np.maximum(s + zj - 1, 0.0) / denom
    return row[:, None] * col[None, :]


def _inv_mean_gamma_sum(shape: np.ndarray, rate: np.ndarray) -> float:
    """``1 / E(1/T)`` for ``T`` a sum of independent Gamma(shape_i, rate_i).

    Uses ``E(1/T) = int_0^inf E exp(-tT) dt``.
    """
    if shape.sum() <= 1:
        return 0.0

    def laplace(t):
        return math.exp(-float(np.sum(shape * np.log1p(t / rate))))

    val, _ = integrate.quad(laplace, 0, np.inf, epsabs=0, epsrel=1e-12, limit=200)
    return 1.0 / val
