"""JSON descriptions of estimators and priors.

An estimator spec is a mapping with a ``"kind"`` field plus parameters, for
example ``{"kind": "delta_c", "c": 3}`` or ``{"kind": "eb", "alpha": [1, 2],
"c": 0}``. ``EstimatorSpec.apply`` maps a batch of counts to estimates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from . import bayes, shrinkers
from .core import resolve_matrix
from .countmodels import SumProportionsPrior, prior_from_dict, sum_law_from_dict
from .risk import h0_eb, phi_delta_c, risk_eb, risk_mean_shrink, risk_shrink_family
from .series import DEFAULT, SeriesConfig

SPEC_VERSION = 1

KINDS = (
    "mle", "delta_c", "cz", "dc_family", "quad_dominator", "cumulative", "eb",
    "weighted_cz", "mean_shrink", "mean_shrink_b0", "mean_shrink_careful", "matrix",
    "hierarchical", "bayes_gamma",
)
SERIES_KINDS = ("delta_c", "cz", "dc_family", "eb", "mean_shrink", "mean_shrink_b0")


def _psi(d: Mapping, p: int) -> shrinkers.PsiFunction:
    kind = d.get("kind")
    if kind == "const":
        if "value" in d:
            return shrinkers.PsiFunction.constant_value(float(d["value"]), p)
        return shrinkers.PsiFunction.constant(float(d["kappa"]), p)
    if kind == "table":
        return shrinkers.PsiFunction.from_table(d["table"], p)
    raise ValueError(f"unknown psi kind {kind!r}")


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}; expected one of {KINDS}")

    @classmethod
    def from_dict(cls, d: Mapping) -> "EstimatorSpec":
        d = dict(d)
        version = d.pop("version", SPEC_VERSION)
        if version != SPEC_VERSION:
            raise ValueError(f"unsupported spec version {version}")
        if "kind" not in d:
            raise ValueError("estimator spec needs a 'kind'")
        return cls(d.pop("kind"), d)

    @classmethod
    def from_json(cls, text: str) -> "EstimatorSpec":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    def get(self, key: str, default: Any = None) -> Any:
        return self.params.get(key, default)

    def apply(self, y: Any) -> np.ndarray:
        """Estimates for counts of shape ``(p,)`` or ``(n, p)``; ``(k, p)``
        or ``(n, k, p)`` for the matrix kind."""
        y = np.asarray(y)
        k, g = self.kind, self.get
        if k == "mle":
            return shrinkers.mle(y)
        if k == "delta_c":
            return shrinkers.delta_c(y, float(g("c", 0.0)))
        if k == "cz":
            return shrinkers.clevenson_zidek(y)
        if k == "dc_family":
            return shrinkers.dc_family(y, float(g("c", 0.0)), _psi(g("psi"), y.shape[-1]))
        if k == "quad_dominator":
            A = resolve_matrix(g("A", {"kind": "identity"}), y.shape[-1])
            return shrinkers.quad_dominator(y, A, variant=g("variant", "geq1"))
        if k == "cumulative":
            return shrinkers.cumulative_estimator(y)[0]
        if k == "eb":
            alpha = g("alpha", 1.0)
            return bayes.empirical_bayes(y, np.broadcast_to(np.asarray(alpha, float), y.shape[-1:]),
                                         float(g("c", 0.0)))
        if k == "weighted_cz":
            return shrinkers.weighted_cz(y, np.asarray(g("w"), dtype=float))
        if k in ("mean_shrink", "mean_shrink_b0"):
            return shrinkers.mean_shrink_b0(y, float(g("b0")))
        if k == "mean_shrink_careful":
            return shrinkers.mean_shrink_careful(y)
        if k == "matrix":
            return shrinkers.matrix_shrinker(y, float(g("c", 0.0)))
        if k == "hierarchical":
            h = bayes.HyperPrior(float(g("eta")), float(g("zeta")))
            return bayes.hierarchical_bayes(y, h, float(g("c", 0.0)))
        if k == "bayes_gamma":
            prior = bayes.GammaPriorVec(np.broadcast_to(np.asarray(g("alpha"), float), y.shape[-1:]),
                                        float(g("beta")))
            return bayes.bayes_gamma(y, prior, float(g("c", 0.0)))
        raise AssertionError(k)


def series_risk(spec: EstimatorSpec, p: int, c: float, gamma: float, pi: Any = None,
                cfg: SeriesConfig = DEFAULT) -> float:
    """Exact risk under L_c at ``theta = gamma * pi`` for series-computable kinds.

    ``pi`` defaults to equal proportions. Only the empirical Bayes and mean
    smoothing kinds depend on ``pi``; the empirical Bayes risk needs ``c = 0``.
    """
    pi = np.full(p, 1.0 / p) if pi is None else np.asarray(pi, dtype=float)
    k = spec.kind
    if k in ("delta_c", "cz", "dc_family"):
        return risk_shrink_family(phi_for_spec(spec, p, c), p, c, gamma, cfg)
    if k == "eb":
        if c != 0:
            raise ValueError("the empirical Bayes risk series is for c = 0")
        if float(spec.get("c", 0.0)) != 0:
            raise ValueError("the empirical Bayes risk series is for the c = 0 estimator")
        alpha = np.broadcast_to(np.asarray(spec.get("alpha", 1.0), dtype=float), (p,))
        return risk_eb(h0_eb(float(alpha.sum())), p, alpha, gamma * pi, cfg)
    if k in ("mean_shrink", "mean_shrink_b0"):
        b0 = float(spec.get("b0"))
        B_pi = float(np.mean(1 / pi))

        def g(z):
            return (p - 1) / (p - 1 + (b0 - 1) * np.asarray(z, dtype=float))

        return p + c + risk_mean_shrink(g, p, gamma, B_pi, cfg)
    raise ValueError(f"no series risk for estimator kind {k!r}")


def phi_for_spec(spec: EstimatorSpec, p: int, c: float) -> Callable[[np.ndarray], np.ndarray]:
    """Shrinkage function ``phi`` for kinds of the form ``{1 - phi(Z)} Y``."""
    k = spec.kind
    if k == "cz":
        return phi_delta_c(p, 0.0)
    if k == "delta_c":
        return phi_delta_c(p, float(spec.get("c", c)))
    if k == "dc_family":
        psi = _psi(spec.get("psi"), p)
        return lambda z: psi.phi(z, float(spec.get("c", c)))
    if k == "hierarchical":
        h = bayes.HyperPrior(float(spec.get("eta")), float(spec.get("zeta")))
        ce = float(spec.get("c", c))
        return lambda z: bayes.hierarchical_psi(z, p, h, ce) / (p - 1 + (1 + ce) * np.asarray(z, float))
    raise ValueError(f"estimator kind {k!r} is not of the form (1 - phi(Z)) Y")


# ---------------------------------------------------------------------------
# Priors


@dataclass(frozen=True)
class PriorSpec:
    """Either a sum-times-proportions prior or one of the Bayes-estimator priors.

    ``{"sum_law": {...}, "alpha": [...]}`` builds a ``SumProportionsPrior``;
    ``{"kind": "gamma_vec", "alpha": [...], "beta": b}``,
    ``{"kind": "sum_dirichlet", "sum_law": {...}}`` and
    ``{"kind": "hyper", "eta": e, "zeta": z}`` build the priors behind
    ``bayes_gamma``, ``bayes_sum_dirichlet`` and ``hierarchical_bayes``.
    """

    raw: dict

    @classmethod
    def from_dict(cls, d: Mapping) -> "PriorSpec":
        spec = cls(dict(d))
        spec.build()
        return spec

    def build(self) -> Any:
        d = self.raw
        kind = d.get("kind")
        if kind is None:
            return prior_from_dict(d)
        if kind == "gamma_vec":
            return bayes.GammaPriorVec(np.asarray(d["alpha"], dtype=float), float(d["beta"]))
        if kind == "sum_dirichlet":
            return sum_law_from_dict(d["sum_law"])
        if kind == "hyper":
            return bayes.HyperPrior(float(d["eta"]), float(d["zeta"]))
        raise ValueError(f"unknown prior kind {kind!r}")

    def count_model(self) -> SumProportionsPrior:
        prior = self.build()
        if not isinstance(prior, SumProportionsPrior):
            raise ValueError("this prior spec does not describe a count model")
        return prior
