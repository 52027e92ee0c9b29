"""Seeded, chunked Monte Carlo over Poisson data.

Draws come in fixed chunks of ``CHUNK`` replicates. Chunk ``k`` uses its own
generator spawned from ``SeedSequence(seed, spawn_key=(k,))``, so results do
not depend on how many workers evaluate the chunks. Per-chunk summaries are
merged in chunk order with the pairwise mean/variance update.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

CHUNK = 65_536
MIN_DRAWS = 1000

Estimator = Callable[[np.ndarray], np.ndarray]
LossFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MCResult:
    mean: float
    se: float
    n: int

    def within(self, value: float, k: float = 3.0) -> bool:
        return abs(self.mean - value) <= k * self.se

    def to_dict(self) -> dict:
        return {"mean": self.mean, "se": self.se, "n": self.n}


@dataclass
class _Moments:
    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def merge(self, n: int, mean: float, m2: float) -> None:
        if n == 0:
            return
        tot = self.n + n
        delta = mean - self.mean
        self.mean += delta * n / tot
        self.m2 += m2 + delta * delta * self.n * n / tot
        self.n = tot


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def chunk_sizes(n: int) -> list[int]:
    full, rest = divmod(n, CHUNK)
    return [CHUNK] * full + ([rest] if rest else [])


def poisson_draws(theta: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` independent draws of ``Y ~ Poisson(theta)``, shape ``(size,) + theta.shape``."""
    return rng.poisson(theta, size=(size,) + theta.shape)


def _summaries(values: Sequence[np.ndarray]) -> list[tuple[int, np.ndarray, np.ndarray]]:
    out = []
    for v in values:
        mean = v.mean(axis=0)
        out.append((v.shape[0], mean, ((v - mean) ** 2).sum(axis=0)))
    return out


def simulate(stat: Callable[[np.ndarray], np.ndarray], theta: Any, n: int, seed: int,
             workers: int = 1) -> list[MCResult]:
    """Average a per-draw statistic over ``n`` Poisson draws.

    Args:
        stat: maps a batch of counts ``(m,) + theta.shape`` to values of
            shape ``(m,)`` or ``(m, j)``; each column is averaged separately,
            so several estimators can share the same draws.
        theta: Poisson means (vector or matrix).
        n: number of draws, at least ``MIN_DRAWS``.
        seed: root seed.
        workers: threads evaluating chunks; does not change the result.

    Returns:
        One ``MCResult`` per statistic column.
    """
    if n < MIN_DRAWS:
        raise ValueError(f"need n >= {MIN_DRAWS} draws for a meaningful standard error")
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("Poisson means must be nonnegative")

    def run(k_size):
        k, size = k_size
        y = poisson_draws(theta, size, chunk_rng(seed, k))
        v = np.asarray(stat(y), dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != size:
            raise ValueError("statistic must return one row per draw")
        return _summaries([v])[0]

    jobs = list(enumerate(chunk_sizes(n)))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]

    ncol = parts[0][1].size
    acc = [_Moments() for _ in range(ncol)]
    for size, mean, m2 in parts:
        for j in range(ncol):
            acc[j].merge(size, float(mean[j]), float(m2[j]))
    return [MCResult(a.mean, math.sqrt(a.m2 / (a.n - 1) / a.n), a.n) for a in acc]


def mc_loss(estimator: Estimator, loss: LossFn, theta: Any, n: int, seed: int,
            workers: int = 1) -> MCResult:
    """Risk of one estimator: mean loss over ``n`` draws."""
    theta = np.asarray(theta, dtype=float)
    return simulate(lambda y: loss(theta, estimator(y)), theta, n, seed, workers)[0]


def mc_loss_difference(est_a: Estimator, est_b: Estimator, loss: LossFn, theta: Any,
                       n: int, seed: int, workers: int = 1) -> MCResult:
    """Risk of ``est_a`` minus risk of ``est_b`` on common random numbers."""
    theta = np.asarray(theta, dtype=float)

    def stat(y):
        return loss(theta, est_a(y)) - loss(theta, est_b(y))

    return simulate(stat, theta, n, seed, workers)[0]
