"""Risk functions: exact series, Monte Carlo and dominance verifiers.

Series risks are written as expectations over the total ``Z ~ Poisson(gamma)``
(or its negative-binomial marginal) and go through ``series``. Independent
closed forms use separate code paths so they can serve as cross-checks.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .core import LossSpec, MeanVector, QuadraticForm, WeightedLc, loss_matrix_bound_M
from .montecarlo import MCResult, mc_loss, mc_loss_difference
from .series import DEFAULT, SeriesConfig, negbin_expectation, poisson_expectation
from .shrinkers import careful_g0, count_active, harmonic, mean_shrink_careful, psi0

__all__ = [
    "SeriesConfig", "poisson_expectation", "MCResult",
    "phi_delta_c", "d_star", "risk_shrink_family", "risk_delta_c_closed",
    "risk_mean_shrink", "careful_D0", "risk_careful_shrink", "eb_risk_terms",
    "risk_eb", "BayesGammaRisk", "risk_bayes_gamma_L1", "mbr_gamma",
    "mc_risk", "mc_risk_difference", "IdentityCheck", "appendix_identity_check",
    "Theorem2Report", "dominance_check_theorem2", "QuadReport",
    "dominance_check_quad", "RiskCurve",
]

Phi = Callable[[np.ndarray], np.ndarray]


def _theta(theta: Any) -> np.ndarray:
    if isinstance(theta, MeanVector):
        return theta.theta
    return MeanVector(np.asarray(theta, dtype=float)).theta


# ---------------------------------------------------------------------------
# Shrink-to-origin family


def phi_delta_c(p: int, c: float) -> Phi:
    """Shrinkage ``phi(z) = (p-1)/(p-1+(1+c)z)`` of ``delta_c`` (``c=0``: Clevenson-Zidek)."""
    return lambda z: (p - 1) / (p - 1 + (1 + c) * np.asarray(z, dtype=float))


def d_star(phi: Phi, p: int, c: float, z: Any) -> np.ndarray:
    """Risk-difference integrand ``D*(phi, z)`` for ``{1 - phi(Z)} Y`` under L_c."""
    z = np.asarray(z, dtype=float)
    f1 = np.asarray(phi(z + 1), dtype=float)
    f0 = np.asarray(phi(z), dtype=float)
    return (f1 * f1 - 2 * f1) * (p - 1 + (1 + c) * (z + 1)) + 2 * (1 + c) * f0 * z


def risk_shrink_family(phi: Phi, p: int, c: float, gamma: float,
                       cfg: SeriesConfig = DEFAULT) -> float:
    """``p + c + E D*(phi, Z)``: risk of ``{1 - phi(Z)} Y`` under L_c."""
    return p + c + poisson_expectation(lambda z: d_star(phi, p, c, z), gamma, cfg)


def risk_delta_c_closed(p: int, c: float, gamma: float, cfg: SeriesConfig = DEFAULT) -> float:
    """Risk of ``delta_c`` under L_c in its simplified closed form.

    Tends to ``(1+c)^2/(p+c)`` as ``gamma -> 0`` and increases to ``p + c``.
    """
    if p < 2:
        raise ValueError("need p >= 2")

    def f(z):
        z = z.astype(float)
        return (p - 1) ** 2 / (p - 1 + (1 + c) * (z + 1)) * (1 + 2 * (1 + c) / (p - 1 + (1 + c) * z))

    return p + c - poisson_expectation(f, gamma, cfg)


# ---------------------------------------------------------------------------
# Smoothing toward the mean


def risk_mean_shrink(g: Phi, p: int, gamma: float, B_pi: float,
                     cfg: SeriesConfig = DEFAULT) -> float:
    """Risk difference against ``Y`` of ``y_i - g(Z)(y_i - ybar)``.

    The estimator keeps the total, so the sum penalty cancels and the same
    difference holds for every ``c``. ``B_pi`` is the mean inverse proportion
    ``(1/p) sum 1/pi_i`` and is at least ``p``.
    """
    if B_pi < p * (1 - 1e-12):
        raise ValueError(f"B_pi must be at least p={p}")

    def f(z):
        g1 = np.asarray(g(z + 1), dtype=float)
        return g1 * g1 * (p - 1 + (z + 1) * (B_pi / p - 1)) - 2 * (p - 1) * g1

    return poisson_expectation(f, gamma, cfg)


def careful_D0(y: Any) -> np.ndarray:
    """Unbiased risk-difference estimate for the careful smoother.

    With ``g = g0(z+1)``: if every count is positive, ``g^2 {z + p - 2(z+1) +
    (z+1)^2/p^2 sum 1/(y_i+1)} - 2g(p-1)``; with exactly one zero,
    ``g^2 u^2 - 2 g u`` where ``u = 1 - (z+1)/p``; otherwise 0.
    """
    y = np.asarray(y, dtype=float)
    p = y.shape[-1]
    if p < 3:
        raise ValueError("need p >= 3")
    z = y.sum(axis=-1)
    g = careful_g0(z + 1, p)
    zeros = (y == 0).sum(axis=-1)
    all_pos = g * g * (z + p - 2 * (z + 1) + (z + 1) ** 2 / p**2 * (1 / (y + 1)).sum(axis=-1)) \
        - 2 * g * (p - 1)
    u = 1 - (z + 1) / p
    one_zero = g * g * u * u - 2 * g * u
    return np.where(zeros == 0, all_pos, np.where(zeros == 1, one_zero, 0.0))


def risk_careful_shrink(p: int, theta: Any, n: int, seed: int, workers: int = 1) -> MCResult:
    """Monte Carlo risk of ``mean_shrink_careful`` under the unpenalized weighted loss."""
    theta = _theta(theta)
    if theta.size != p:
        raise ValueError("theta has the wrong length")
    if p < 3:
        raise ValueError("need p >= 3")
    return mc_loss(mean_shrink_careful, WeightedLc(0.0).evaluate, theta, n, seed, workers)


# ---------------------------------------------------------------------------
# Empirical Bayes toward a Gamma prior mean


def eb_risk_terms(h: Phi, p: int, alpha: Any, theta: Any,
                  cfg: SeriesConfig = DEFAULT) -> dict[str, float]:
    """Pieces ``m1, m2, R1, R2, C`` of the risk of ``h(Z)(alpha_i + Y_i - 1)``."""
    theta = _theta(theta)
    if theta.size != p:
        raise ValueError("theta has the wrong length")
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (p,))
    if float(np.asarray(h(np.array([0])), dtype=float)[0]) != 0.0:
        raise ValueError("h(0) must be 0")
    gamma = float(theta.sum())
    pi = theta / gamma

    def hv(z):
        return np.asarray(h(z), dtype=float)

    m1 = poisson_expectation(lambda z: hv(z) ** 2, gamma, cfg)
    m2 = poisson_expectation(lambda z: hv(z + 1) ** 2, gamma, cfg)
    r1 = poisson_expectation(lambda z: hv(z + 1) ** 2 * (z + 1) - 2 * hv(z) * z + gamma, gamma, cfg)
    r2 = poisson_expectation(lambda z: (hv(z + 1) * (z + 1) - gamma) * hv(z + 1) / (z + 1), gamma, cfg)
    C = float(np.mean((alpha - 1) ** 2 / pi))
    return {"gamma": gamma, "C": C, "m1": m1, "m2": m2, "R1": r1, "R2": r2,
            "p_alpha_bar": float(alpha.sum())}


def risk_eb(h: Phi, p: int, alpha: Any, theta: Any, cfg: SeriesConfig = DEFAULT) -> float:
    """Risk under the unpenalized weighted loss of ``h(Z)(alpha_i + Y_i - 1)``.

    ``p m1 C/gamma + R1 + 2(p abar - p) R2 + (p-1) m2``. The formula is for the
    unclamped estimator; it matches ``empirical_bayes`` whenever every
    ``alpha_i >= 1``.
    """
    t = eb_risk_terms(h, p, alpha, theta, cfg)
    return (p * t["m1"] * t["C"] / t["gamma"] + t["R1"]
            + 2 * (t["p_alpha_bar"] - p) * t["R2"] + (p - 1) * t["m2"])


def h0_eb(p_alpha_bar: float) -> Phi:
    """``h0(z) = z/(p abar - 1 + z)``, the unpenalized empirical Bayes weight."""
    def h(z):
        z = np.asarray(z, dtype=float)
        return np.where(z > 0, z / np.where(z > 0, p_alpha_bar - 1 + z, 1.0), 0.0)

    return h


@dataclass(frozen=True)
class BayesGammaRisk:
    risk: float
    A: float
    beta: float

    @property
    def dominates(self) -> bool:
        """``A(theta) <= 2 + beta``, equivalent to risk at most ``p``."""
        return self.A <= 2 + self.beta


def risk_bayes_gamma_L1(alpha: Any, beta: float, theta: Any) -> BayesGammaRisk:
    """Closed-form risk of ``(alpha_i + Y_i - 1)/(beta + 1)`` under the unpenalized loss."""
    theta = _theta(theta)
    if beta <= 0:
        raise ValueError("beta must be positive")
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), theta.shape)
    p = theta.size
    dev = (alpha - 1 - beta * theta) ** 2
    risk = (math.fsum(dev / theta) + p) / (beta + 1) ** 2
    A = math.fsum(dev / (beta * theta)) / p
    return BayesGammaRisk(risk, A, beta)


# ---------------------------------------------------------------------------
# Minimum Bayes risk for the symmetric Gamma(1, beta) prior


def mbr_gamma(p: int, c: float, beta: float, cfg: SeriesConfig = DEFAULT) -> float:
    """Minimum Bayes risk under L_c for iid Gamma(1, beta) rates.

    The expectation is over the negative-binomial marginal of ``Z`` with
    shape ``p``; the value increases to ``p + c`` as ``beta -> 0``.
    """
    if p < 2:
        raise ValueError("need p >= 2")
    if beta <= 0:
        raise ValueError("beta must be positive")

    def f(z):
        return (p * (p - 1) + (p + c) * z) / (p - 1 + (1 + c) * z)

    return (1 + c) / (1 + beta) * negbin_expectation(f, p, beta, cfg)


# ---------------------------------------------------------------------------
# Monte Carlo


def _as_estimator(est: Any) -> Callable[[np.ndarray], np.ndarray]:
    if hasattr(est, "apply"):
        return est.apply
    if callable(est):
        return est
    raise TypeError("estimator must be callable or provide .apply")


def mc_risk(est: Any, loss: LossSpec, theta: Any, n: int, seed: int,
            workers: int = 1) -> MCResult:
    """Monte Carlo risk of an estimator (callable or spec) under ``loss``.

    Deterministic in ``(seed, n)``; ``workers`` only changes the speed.
    """
    theta = np.asarray(theta.theta if isinstance(theta, MeanVector) else theta, dtype=float)
    return mc_loss(_as_estimator(est), loss.evaluate, theta, n, seed, workers)


def mc_risk_difference(est_a: Any, est_b: Any, loss: LossSpec, theta: Any, n: int,
                       seed: int, workers: int = 1) -> MCResult:
    """Risk of ``est_a`` minus that of ``est_b``, on shared draws."""
    theta = np.asarray(theta.theta if isinstance(theta, MeanVector) else theta, dtype=float)
    return mc_loss_difference(_as_estimator(est_a), _as_estimator(est_b), loss.evaluate,
                              theta, n, seed, workers)


# ---------------------------------------------------------------------------
# Risk representation for estimators (1+c) y_i kappa(z)/(p-1+(1+c)z)


@dataclass(frozen=True)
class IdentityCheck:
    lhs: float
    lhs_se: float
    rhs: float

    @property
    def diff(self) -> float:
        return abs(self.lhs - self.rhs)

    def within(self, k: float = 3.0) -> bool:
        return self.diff <= k * self.lhs_se


def identity_rhs(p: int, c: float, gamma: float, kappa: Phi, cfg: SeriesConfig = DEFAULT) -> float:
    def f(z):
        z = z.astype(float)
        d = p - 1 + (1 + c) * z
        k = np.asarray(kappa(z), dtype=float)
        return (1 + c) ** 2 * z / d * (k - gamma) ** 2 / gamma + (p - 1) * (1 + c) * gamma / d

    return poisson_expectation(f, gamma, cfg)


def symform_estimator(p: int, c: float, kappa: Phi) -> Callable[[np.ndarray], np.ndarray]:
    def est(y):
        y = np.asarray(y, dtype=float)
        z = y.sum(axis=-1, keepdims=True)
        return (1 + c) * y * np.asarray(kappa(z), dtype=float) / (p - 1 + (1 + c) * z)

    return est


def appendix_identity_check(p: int, c: float, gamma: float, kappa: Phi,
                            cfg: SeriesConfig = DEFAULT, *, theta: Any = None,
                            n: int = 1_000_000, seed: int = 0) -> IdentityCheck:
    """Compare the Monte Carlo risk of ``(1+c) y_i kappa(Z)/(p-1+(1+c)Z)``
    with its series representation.

    ``theta`` defaults to equal rates summing to ``gamma``; any vector with
    that sum gives the same risk.
    """
    if theta is None:
        theta = np.full(p, gamma / p)
    theta = _theta(theta)
    if theta.size != p or not math.isclose(theta.sum(), gamma, rel_tol=1e-12):
        raise ValueError("theta must have length p and sum gamma")
    mc = mc_risk(symform_estimator(p, c, kappa), WeightedLc(c), theta, n, seed)
    return IdentityCheck(mc.mean, mc.se, identity_rhs(p, c, gamma, kappa, cfg))


# ---------------------------------------------------------------------------
# Dominance verifiers


@dataclass(frozen=True)
class Condition:
    name: str
    passed: bool
    worst_value: float
    worst_at: Any

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed,
                "worst_value": self.worst_value, "worst_at": self.worst_at}


@dataclass(frozen=True)
class Theorem2Report:
    p: int
    c: float
    z_max: int
    conditions: tuple[Condition, ...]

    @property
    def passed(self) -> bool:
        return all(cond.passed for cond in self.conditions)

    def condition(self, name: str) -> Condition:
        return next(cond for cond in self.conditions if cond.name == name)

    def to_dict(self) -> dict:
        return {"mode": "theorem2", "p": self.p, "c": self.c, "z_max": self.z_max,
                "passed": self.passed, "conditions": [c.to_dict() for c in self.conditions]}


DEFAULT_GAMMA_GRID = tuple(np.logspace(-3, 3, 24))


def dominance_check_theorem2(phi: Phi, p: int, c: float, z_max: int = 10_000,
                             gamma_grid: Sequence[float] = DEFAULT_GAMMA_GRID,
                             cfg: SeriesConfig = DEFAULT) -> Theorem2Report:
    """Check the sufficient conditions for ``{1 - phi(Z)} Y`` to dominate ``Y`` under L_c.

    Conditions on ``z = 1..z_max``: ``phi(z) > 0``; ``phi(z)(p-1+(1+c)z) <
    2(p-1)``; ``z phi(z)`` strictly increasing (including from ``z = 0``).
    A fourth entry reports ``sup E D*(phi, Z)`` over ``gamma_grid``, which
    must be negative. Each entry carries its worst value and location.
    """
    if z_max < 10:
        raise ValueError("z_max must be at least 10")
    z = np.arange(0, z_max + 2, dtype=float)
    f = np.asarray(phi(z), dtype=float)
    inner = slice(1, z_max + 1)
    zi = z[inner]

    pos = f[inner]
    k = int(np.argmin(pos))
    conds = [Condition("positive", bool(pos[k] > 0), float(pos[k]), int(zi[k]))]

    excess = f[inner] * (p - 1 + (1 + c) * zi) - 2 * (p - 1)
    k = int(np.argmax(excess))
    conds.append(Condition("upper_bound", bool(excess[k] < 0), float(excess[k]), int(zi[k])))

    zf = z * f
    steps = zf[1:z_max + 2] - zf[:z_max + 1]
    k = int(np.argmin(steps))
    ok = bool(np.all(steps[1:] > 0) and steps[0] >= 0)
    conds.append(Condition("z_phi_increasing", ok, float(steps[k]), int(z[k])))

    sup, at = -math.inf, None
    for g in gamma_grid:
        v = poisson_expectation(lambda zz: d_star(phi, p, c, zz), float(g), cfg)
        if v > sup:
            sup, at = v, float(g)
    conds.append(Condition("risk_below_minimax", bool(sup < 0), float(sup), at))
    return Theorem2Report(p, c, z_max, tuple(conds))


@dataclass(frozen=True)
class QuadReport:
    p: int
    y_max: int
    variant: str
    M: float
    n_points: int
    violations: int
    sup_slack: float
    argmax: tuple[int, ...]
    worst: tuple[tuple[tuple[int, ...], float], ...] = field(default=())

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {"mode": "quad", "p": self.p, "y_max": self.y_max, "variant": self.variant,
                "M": self.M, "n_points": self.n_points, "violations": self.violations,
                "passed": self.passed, "sup_slack": self.sup_slack, "argmax": list(self.argmax),
                "worst": [{"y": list(y), "slack": s} for y, s in self.worst]}


GRID_GUARD = 10_000_000


def quad_risk_difference_integrand(y: np.ndarray, A_inv: np.ndarray, M: float,
                                   variant: str) -> np.ndarray:
    """``D(y) = -sum 2 y_i {psi_i(y) - psi_i(y - e_i)} + psi' A^{-1} psi`` for ``psi0``."""
    y = np.asarray(y, dtype=np.int64)
    psi = psi0(y, M, variant)
    out = np.einsum("...i,ij,...j->...", psi, A_inv, psi)
    for i in range(y.shape[-1]):
        down = y.copy()
        down[..., i] = np.maximum(down[..., i] - 1, 0)
        out -= 2 * y[..., i] * (psi[..., i] - psi0(down, M, variant)[..., i])
    return out


def dominance_check_quad(p: int, A: Any, y_max: int, variant: str = "geq1", *,
                         M: float | None = None, tol: float = 1e-12,
                         n_worst: int = 10) -> QuadReport:
    """Check ``D(y) <= -(N(y)-2)_+^2 / (M B(y))`` on the grid ``{0..y_max}^p``.

    The bound is taken as 0 where ``B(y) = 0``. ``sup_slack`` is the largest
    value of ``D(y) - bound`` and ``argmax`` where it occurs.
    """
    if p < 3:
        raise ValueError("need p >= 3")
    if p * (y_max + 1) ** p > GRID_GUARD:
        raise ValueError("grid too large to enumerate")
    A = QuadraticForm(A).A
    if A.shape != (p, p):
        raise ValueError("A does not match p")
    if M is None:
        M = loss_matrix_bound_M(A)
    axes = np.meshgrid(*[np.arange(y_max + 1)] * p, indexing="ij")
    grid = np.stack([a.ravel() for a in axes], axis=-1).astype(np.int64)
    D = quad_risk_difference_integrand(grid, np.linalg.inv(A), M, variant)
    B = (harmonic(grid) * harmonic(grid + 1)).sum(axis=-1)
    N = count_active(grid, variant)
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.where(B > 0, -np.maximum(N - 2, 0) ** 2 / (M * np.where(B > 0, B, 1.0)), 0.0)
    slack = D - bound
    bad = slack > tol * np.maximum(1.0, np.abs(bound))
    order = np.argsort(-slack)[:n_worst]
    worst = tuple((tuple(int(v) for v in grid[i]), float(slack[i])) for i in order if bad[i])
    k = int(order[0])
    return QuadReport(p, y_max, variant, float(M), grid.shape[0], int(bad.sum()),
                      float(slack[k]), tuple(int(v) for v in grid[k]), worst)


# ---------------------------------------------------------------------------
# Risk curves


@dataclass
class RiskCurve:
    gamma_grid: np.ndarray
    risk_values: np.ndarray
    estimator: dict
    loss: dict
    method: str = "exact-series"
    se: np.ndarray | None = None
    n: int | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        self.gamma_grid = np.asarray(self.gamma_grid, dtype=float)
        self.risk_values = np.asarray(self.risk_values, dtype=float)
        if self.gamma_grid.shape != self.risk_values.shape or self.gamma_grid.ndim != 1:
            raise ValueError("grid and values must be 1-D of equal length")
        if np.any(self.gamma_grid <= 0) or np.any(np.diff(self.gamma_grid) <= 0):
            raise ValueError("gamma grid must be positive and increasing")
        if self.method not in ("exact-series", "monte-carlo"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "monte-carlo":
            if self.se is None or self.n is None or self.seed is None:
                raise ValueError("Monte Carlo curves need se, n and seed")
            self.se = np.asarray(self.se, dtype=float)
            if self.se.shape != self.gamma_grid.shape:
                raise ValueError("se must match the grid")

    def se_or_zero(self) -> np.ndarray:
        return self.se if self.se is not None else np.zeros_like(self.risk_values)

    def to_csv(self, header: str | None = None) -> str:
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gamma", "risk", "se_or_zero"])
        for g, r, s in zip(self.gamma_grid, self.risk_values, self.se_or_zero()):
            w.writerow([repr(float(g)), repr(float(r)), repr(float(s))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        d = {"gamma": self.gamma_grid.tolist(), "risk": self.risk_values.tolist(),
             "estimator": self.estimator, "loss": self.loss, "method": self.method}
        if self.method == "monte-carlo":
            d.update(se=self.se.tolist(), n=self.n, seed=self.seed)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RiskCurve":
        return cls(np.asarray(d["gamma"]), np.asarray(d["risk"]), d["estimator"], d["loss"],
                   d.get("method", "exact-series"), d.get("se"), d.get("n"), d.get("seed"))
