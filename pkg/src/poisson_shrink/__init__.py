"""Simultaneous estimation of Poisson means: shrinkage estimators, priors,
count models and risk computation."""

from .core import (CountMatrix, CountVector, MatrixLc, MeanVector, QuadraticForm, WeightedLc,
                   WeightedW, build_cumulative_matrix, build_sum_penalty_matrix, eval_loss,
                   loss_matrix_bound_M)
from .shrinkers import (PsiFunction, WeightScheme, clevenson_zidek, cumulative_estimator,
                        dc_family, delta_c, matrix_shrinker, mean_shrink_b0,
                        mean_shrink_careful, mle, quad_dominator, weighted_cz)
from .bayes import (GammaPriorVec, HyperPrior, bayes_gamma, bayes_sum_dirichlet,
                    empirical_bayes, hierarchical_bayes)
from .series import SeriesConfig, poisson_expectation
from .risk import (RiskCurve, appendix_identity_check, dominance_check_quad,
                   dominance_check_theorem2, mbr_gamma, mc_risk, risk_delta_c_closed,
                   risk_shrink_family)

__version__ = "0.1.0"
