"""Truncated-series expectations over Poisson and negative-binomial laws.

Every risk formula that is an expectation over the total count goes through
this module. Terms are generated by the pmf recurrence and summed until the
accumulated mass reaches ``1 - tail_mass_tol`` (or a geometric bound on the
remaining mass drops below it), and never before a minimum number of terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln

LOG_START_GAMMA = 700.0


@dataclass(frozen=True)
class SeriesConfig:
    tail_mass_tol: float = 1e-12
    min_terms: int = 1
    max_terms: int = 20_000_000

    def __post_init__(self) -> None:
        if not 0 < self.tail_mass_tol < 1e-6:
            raise ValueError("tail_mass_tol must lie in (0, 1e-6)")
        if not self.max_terms >= self.min_terms >= 1:
            raise ValueError("need max_terms >= min_terms >= 1")


DEFAULT = SeriesConfig()


class SeriesLimitError(RuntimeError):
    """The series did not reach its tail tolerance within ``max_terms``."""


@dataclass(frozen=True)
class PmfTable:
    z: np.ndarray
    pmf: np.ndarray
    tail_bound: float


def _geometric_tail(last: float, ratio: float) -> float:
    if ratio >= 1:
        return math.inf
    return last * ratio / (1 - ratio)


def poisson_pmf_table(gamma: float, cfg: SeriesConfig = DEFAULT) -> PmfTable:
    """Poisson(gamma) pmf from ``z = 0`` up to the truncation point.

    The recurrence ``p_{z+1} = p_z gamma/(z+1)`` starts from ``exp(-gamma)``;
    above ``gamma = 700`` that start underflows, so the recurrence is run
    outward from the mode with the mode term computed in log space.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    need = max(cfg.min_terms, math.ceil(gamma + 10 * math.sqrt(gamma) + 20))
    n = need
    while True:
        if n > cfg.max_terms:
            raise SeriesLimitError(f"Poisson series for gamma={gamma} exceeds {cfg.max_terms} terms")
        pmf = _poisson_block(gamma, n)
        mass = math.fsum(pmf)
        tail = _geometric_tail(pmf[-1], gamma / n)
        if mass >= 1 - cfg.tail_mass_tol or tail < cfg.tail_mass_tol:
            return PmfTable(np.arange(n), pmf, min(tail, max(1 - mass, 0.0)))
        n *= 2


def _poisson_block(gamma: float, n: int) -> np.ndarray:
    if gamma <= LOG_START_GAMMA:
        steps = np.empty(n)
        steps[0] = math.exp(-gamma)
        steps[1:] = gamma / np.arange(1, n)
        return np.cumprod(steps)
    mode = min(int(gamma), n - 1)
    log_mode = _log_poisson_pmf_large(mode, gamma)
    pmf = np.empty(n)
    up = np.empty(n - mode)
    up[0] = math.exp(log_mode)
    up[1:] = gamma / np.arange(mode + 1, n)
    pmf[mode:] = np.cumprod(up)
    if mode > 0:
        down = np.empty(mode + 1)
        down[0] = up[0]
        down[1:] = np.arange(mode, 0, -1) / gamma
        pmf[: mode + 1] = np.cumprod(down)[::-1]
    return pmf


def _log_poisson_pmf_large(k: int, gamma: float) -> float:
    """``log P(Z = k)`` for large ``k`` without cancelling large terms.

    Writes ``log k!`` by Stirling's formula plus its small correction, so
    only quantities of order one are combined.
    """
    stirlerr = 1 / (12 * k) - 1 / (360 * k**3) + 1 / (1260 * k**5)
    return (k * math.log1p((gamma - k) / k) - (gamma - k)
            - 0.5 * math.log(2 * math.pi * k) - stirlerr)


def poisson_expectation(f: Callable[[np.ndarray], np.ndarray], gamma: float,
                        cfg: SeriesConfig = DEFAULT) -> float:
    """``E f(Z)`` for ``Z ~ Poisson(gamma)``.

    ``f`` is called once on the integer array ``0, 1, ..., n-1`` and must be
    vectorized (numpy ufunc arithmetic is enough).
    """
    table = poisson_pmf_table(gamma, cfg)
    vals = np.asarray(f(table.z), dtype=float)
    vals = np.broadcast_to(vals, table.z.shape)
    return math.fsum(vals * table.pmf)


def negbin_pmf_table(shape: float, beta: float, cfg: SeriesConfig = DEFAULT) -> PmfTable:
    """Pmf of the Gamma(shape, beta)-mixed Poisson law, truncated like the Poisson.

    Each term is a log-Gamma difference, so large ``shape + z`` cannot
    overflow. The stopping rule uses the term ratio
    ``(shape + z)/((z+1)(1+beta))`` for the geometric tail bound.
    """
    if shape <= 0 or beta <= 0:
        raise ValueError("shape and beta must be positive")
    mean = shape / beta
    sd = math.sqrt(shape * (1 + beta)) / beta
    n = max(cfg.min_terms, math.ceil(mean + 10 * sd + 20))
    while True:
        if n > cfg.max_terms:
            raise SeriesLimitError(f"negative-binomial series exceeds {cfg.max_terms} terms")
        z = np.arange(n, dtype=float)
        pmf = np.exp(shape * math.log(beta) + gammaln(shape + z) - gammaln(shape)
                     - gammaln(z + 1) - (shape + z) * math.log1p(beta))
        mass = math.fsum(pmf)
        ratio = (shape + n - 1) / (n * (1 + beta))
        tail = _geometric_tail(pmf[-1], ratio)
        if mass >= 1 - cfg.tail_mass_tol or tail < cfg.tail_mass_tol:
            return PmfTable(np.arange(n), pmf, min(tail, max(1 - mass, 0.0)))
        n *= 2


def negbin_expectation(f: Callable[[np.ndarray], np.ndarray], shape: float, beta: float,
                       cfg: SeriesConfig = DEFAULT) -> float:
    table = negbin_pmf_table(shape, beta, cfg)
    vals = np.broadcast_to(np.asarray(f(table.z), dtype=float), table.z.shape)
    return math.fsum(vals * table.pmf)
