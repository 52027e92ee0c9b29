"""Data-only estimators: MLE, the shrink-to-origin family, quadratic-loss
dominators, mean-preserving smoothers, weighted and matrix shrinkers.

All estimators accept counts with shape ``(p,)`` or a batch ``(n, p)`` and
operate along the last axis. Inputs given as ``Fraction`` object arrays are
processed in exact arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Mapping

import numpy as np

from .core import as_array, check_counts, is_exact, loss_matrix_bound_M

Vector = np.ndarray


def _counts(y: Any, min_p: int = 1) -> np.ndarray:
    arr = np.asarray(y)
    if arr.size == 0:
        raise ValueError("empty count input")
    if arr.dtype != object:
        check_counts(arr)
    arr = as_array(arr)
    if arr.shape[-1] < min_p:
        raise ValueError(f"need p >= {min_p}, got p={arr.shape[-1]}")
    return arr


def _total(y: np.ndarray) -> np.ndarray:
    return y.sum(axis=-1, keepdims=True)


def mle(y: Any) -> Vector:
    """The raw counts. Constant risk ``p`` under the weighted loss."""
    return _counts(y).copy()


def delta_c(y: Any, c: float = 0.0) -> Vector:
    """Shrink toward the origin by ``1 - (p-1)/(p-1+(1+c)Z)``.

    ``c = 0`` is the Clevenson-Zidek estimator.
    """
    y = _counts(y, min_p=2)
    if c < 0:
        raise ValueError("c must be nonnegative")
    p = y.shape[-1]
    z = _total(y)
    denom = p - 1 + (1 + c) * z
    return (1 - (p - 1) / denom) * y


def clevenson_zidek(y: Any) -> Vector:
    return delta_c(y, 0)


# ---------------------------------------------------------------------------
# psi functions for the dominating class


@dataclass
class PsiFunction:
    """Scalar function ``psi(z)`` on the nonnegative integers for a given p.

    Must be nondecreasing with ``0 < psi(z) < 2(p-1)``. Positivity is only
    demanded for ``z >= 1`` since ``psi(0)`` never enters the risk.
    """

    func: Callable[[np.ndarray], np.ndarray]
    p: int
    label: str = "custom"
    params: dict = field(default_factory=dict)

    @classmethod
    def constant(cls, kappa: float, p: int) -> "PsiFunction":
        if not 0 < kappa < 2:
            raise ValueError("kappa must lie in (0, 2)")
        value = kappa * (p - 1)
        return cls(lambda z: np.full(np.shape(z), value, dtype=float), p,
                   "const", {"value": value})

    @classmethod
    def constant_value(cls, value: float, p: int) -> "PsiFunction":
        return cls(lambda z: np.full(np.shape(z), float(value)), p,
                   "const", {"value": value})

    @classmethod
    def from_table(cls, table: Any, p: int) -> "PsiFunction":
        """Tabulated values; ``z`` beyond the table repeats the last entry."""
        tab = np.asarray(table, dtype=float)

        def func(z):
            return tab[np.minimum(np.asarray(z, dtype=int), tab.size - 1)]

        return cls(func, p, "table", {"table": tab.tolist()})

    @property
    def bound(self) -> float:
        return 2.0 * (self.p - 1)

    def __call__(self, z: Any) -> np.ndarray:
        return np.asarray(self.func(np.asarray(z)), dtype=float)

    def phi(self, z: Any, c: float) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return self(z) / (self.p - 1 + (1 + c) * z)

    def validate(self, z_max: int) -> None:
        """Raise ``ValueError`` unless the conditions hold on ``[0, z_max]``."""
        z = np.arange(int(z_max) + 1)
        vals = self(z)
        if not np.all(np.isfinite(vals)):
            raise ValueError("psi must be finite")
        if np.any(np.diff(vals) < 0):
            bad = int(np.argmax(np.diff(vals) < 0))
            raise ValueError(f"psi decreases between z={bad} and z={bad + 1}")
        pos = vals[1:]
        if pos.size and (np.any(pos <= 0) or np.any(pos >= self.bound)):
            raise ValueError(f"psi must lie in (0, {self.bound}) for z >= 1")


def dc_family(y: Any, c: float, psi: PsiFunction) -> Vector:
    """Member ``{1 - psi(Z)/(p-1+(1+c)Z)} Y`` of the dominating class."""
    y = _counts(y, min_p=2)
    p = y.shape[-1]
    if psi.p != p:
        raise ValueError(f"psi was built for p={psi.p}, data has p={p}")
    z = _total(y)
    psi.validate(int(np.max(z)) + 1)
    if is_exact(y):
        vals = _to_fractions(psi(z.astype(np.int64)))
    else:
        vals = psi(z.astype(np.int64))
    return (1 - vals / (p - 1 + (1 + c) * z)) * y


def _to_fractions(x: Any) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    return np.array([Fraction(v) for v in arr.flat], dtype=object).reshape(arr.shape)


# ---------------------------------------------------------------------------
# Quadratic-loss dominators


def harmonic(y: Any) -> np.ndarray:
    """``T(y) = sum_{j <= y} 1/j`` with ``T(0) = 0``, elementwise."""
    y = np.asarray(y, dtype=np.int64)
    top = int(y.max(initial=0)) + 1
    table = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, top + 1))])
    return table[y]


def count_active(y: Any, variant: str = "geq1") -> np.ndarray:
    """``N(y)``, the coordinate count in the truncation ``(N(y) - 2)_+``.

    ``"geq1"`` counts ``y_i >= 1`` (default). ``"leq1"`` counts ``y_i <= 1``;
    it is kept only so the dominance verifier can show that it fails.
    """
    y = np.asarray(y)
    if variant == "geq1":
        return (y >= 1).sum(axis=-1)
    if variant == "leq1":
        return (y <= 1).sum(axis=-1)
    raise ValueError(f"unknown variant {variant!r}")


def psi0(y: Any, M: float, variant: str = "geq1",
         d: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
    """Correction ``psi_i(y) = d(y) T(y_i) / B(y)``; zero where ``B(y) = 0``.

    ``d`` defaults to ``(N(y) - 2)_+ / M``.
    """
    y = np.asarray(y, dtype=np.int64)
    t = harmonic(y)
    b = (t * harmonic(y + 1)).sum(axis=-1)
    if d is None:
        dval = np.maximum(count_active(y, variant) - 2, 0) / M
    else:
        dval = np.broadcast_to(np.asarray(d(y), dtype=float), b.shape)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(b > 0, dval / np.where(b > 0, b, 1.0), 0.0)
    return t * scale[..., None]


def quad_dominator(y: Any, A: Any, d: Callable | None = None, *,
                   M: float | None = None, variant: str = "geq1") -> Vector:
    """``y - A^{-1} psi0(y)``, dominating ``Y`` under ``(delta-theta)'A(delta-theta)``.

    Args:
        y: counts, shape ``(p,)`` or ``(n, p)``, ``p >= 3``.
        A: symmetric positive-definite loss matrix.
        d: optional replacement for the default ``d0(y) = (N(y)-2)_+ / M``.
        M: bound constant; defaults to ``1 / lambda_min(A)``.
        variant: which coordinate count ``N(y)`` to use (see ``count_active``).

    When ``N(y) <= 2`` or all counts are zero the data are returned unchanged.
    """
    y = np.asarray(_counts(y, min_p=3), dtype=float)
    A = np.asarray(A, dtype=float)
    if M is None:
        M = loss_matrix_bound_M(A)
    psi = psi0(y.astype(np.int64), M, variant, d)
    return y - psi @ np.linalg.inv(A).T


def cumulative_estimator(y: Any) -> tuple[Vector, Vector]:
    """Improved estimates of ``theta`` and of the cumulative sums ``lambda``.

    Uses the second-difference stencil of the cumulative loss matrix with
    bound constant 4. Returns ``(delta, lambda_hat)``.
    """
    y = np.asarray(_counts(y, min_p=3), dtype=float)
    psi = psi0(y.astype(np.int64), 4.0)
    delta = y.copy()
    delta[..., 0] += -psi[..., 0] + psi[..., 1]
    delta[..., 1:-1] += psi[..., :-2] - 2 * psi[..., 1:-1] + psi[..., 2:]
    delta[..., -1] += psi[..., -2] - 2 * psi[..., -1]
    lam = np.cumsum(y, axis=-1)
    lam[..., :-1] += -psi[..., :-1] + psi[..., 1:]
    lam[..., -1] -= psi[..., -1]
    return delta, lam


# ---------------------------------------------------------------------------
# Smoothing toward the mean


def mean_shrink_b0(y: Any, b0: float) -> Vector:
    """Pull each count toward the mean by ``(p-1)/(p-1+(b0-1)Z)``.

    Preserves the total exactly. ``b0`` bounds the mean inverse proportion
    ``B(pi) <= p b0`` over the region where dominance holds.
    """
    if b0 <= 1:
        raise ValueError("b0 must exceed 1")
    y = _counts(y, min_p=2)
    p = y.shape[-1]
    z = _total(y)
    g = (p - 1) / (p - 1 + (b0 - 1) * z)
    return y - g * (y - z / p)


def b0_from_dirichlet(alpha: float, p: int) -> float:
    """``b0 = (alpha - 1/p)/(alpha - 1)`` for a symmetric Dirichlet(alpha) prior."""
    if alpha <= 1:
        raise ValueError("alpha must exceed 1 for a nonempty dominance region")
    return (alpha - 1 / p) / (alpha - 1)


def careful_g0(z: Any, p: int) -> Any:
    """``(p-1)/(p-1-z+z^2/(2p))``; positive for all z when ``p >= 3``."""
    return (p - 1) / (p - 1 - z + z * z / (2 * p))


def mean_shrink_careful(y: Any) -> Vector:
    """Mean-preserving smoother that only acts when every count is positive."""
    y = _counts(y, min_p=3)
    p = y.shape[-1]
    z = _total(y)
    h = np.all(y >= 1, axis=-1, keepdims=True)
    shrunk = y - careful_g0(z, p) * (y - z / p)
    return np.where(h, shrunk, y)


# ---------------------------------------------------------------------------
# Weighted loss


@dataclass(frozen=True)
class WeightScheme:
    """Finite importance weights with envelope ``[a, b]``.

    The theory asks for ``[a, b]`` inside ``(0, 1)`` and ``w0 > 1``; unit
    weights are also accepted because they recover the unweighted case.
    """

    weights: np.ndarray
    envelope: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty vector")
        if np.any(w <= 0) or np.any(w > 1):
            raise ValueError("weights must lie in (0, 1]")
        env = self.envelope or (float(w.min()), float(w.max()))
        if not (env[0] <= w.min() and w.max() <= env[1]):
            raise ValueError("weights fall outside the declared envelope")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "envelope", env)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def v(self, y: np.ndarray) -> np.ndarray:
        return (y * self.weights).sum(axis=-1, keepdims=True)


def weighted_cz(y: Any, w: WeightScheme | Any, psi: Callable | None = None,
                eps: float = 1.0) -> Vector:
    """``{1 - psi(v)/(w0 - eps + v)} y`` with ``v = sum w_i y_i``.

    Defaults ``psi = w0 - eps`` and ``eps = 1`` give the weighted
    Clevenson-Zidek estimator; unit weights recover ``delta_c(y, 0)``.
    """
    y = _counts(y)
    if not isinstance(w, WeightScheme):
        w = WeightScheme(np.asarray(w, dtype=float))
    if y.shape[-1] != w.weights.size:
        raise ValueError("weights and counts differ in length")
    if is_exact(y):
        weights = _to_fractions(w.weights)
        w0 = sum(weights)
        eps = Fraction(eps)
    else:
        weights = w.weights
        w0 = w.total
    if w0 <= eps:
        raise ValueError(f"need w0 > {eps}, got w0={w0}")
    v = (y * weights).sum(axis=-1, keepdims=True)
    shrink = (w0 - eps) if psi is None else np.asarray(psi(v))
    return (1 - shrink / (w0 - eps + v)) * y


@dataclass(frozen=True)
class InfiniteWeights:
    """Summable weight sequence ``w(i)``, ``i = 1, 2, ...``.

    ``tail(i)`` must return the exact remainder ``sum_{j > i} w(j)``.
    """

    weight: Callable[[int], float]
    tail: Callable[[int], float]
    tol: float = 1e-12
    max_index: int = 10_000_000

    @classmethod
    def geometric(cls, scale: float, ratio: float) -> "InfiniteWeights":
        if not 0 < ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")
        return cls(lambda i: scale * ratio ** (i - 1),
                   lambda i: scale * ratio ** i / (1 - ratio))

    @property
    def total(self) -> float:
        acc = []
        i = 0
        while True:
            i += 1
            wi = self.weight(i)
            if not 0 < wi <= 1:
                raise ValueError(f"weight {i} = {wi} outside (0, 1]")
            acc.append(wi)
            rest = self.tail(i)
            if rest < self.tol:
                return math.fsum(acc) + rest
            if i >= self.max_index:
                raise ValueError("weight sequence does not converge within the truncation")


def weighted_cz_truncated(y: Mapping[int, int], w: InfiniteWeights) -> dict[int, float]:
    """Weighted Clevenson-Zidek over an infinite index set, sparse in/out.

    ``y`` maps 1-based indices to counts; absent indices are zero and stay
    zero in the output.
    """
    w0 = w.total
    if w0 <= 1:
        raise ValueError(f"need w0 > 1, got {w0}")
    nz = {int(i): int(v) for i, v in y.items() if v}
    if any(i < 1 for i in nz) or any(v < 0 for v in nz.values()):
        raise ValueError("indices start at 1 and counts are nonnegative")
    v = math.fsum(w.weight(i) * yi for i, yi in nz.items())
    factor = 1 - (w0 - 1) / (w0 - 1 + v)
    return {i: factor * yi for i, yi in nz.items()}


# ---------------------------------------------------------------------------
# Matrix of counts


def matrix_shrinker(Y: Any, c: float = 0.0) -> np.ndarray:
    """``(1+c)(p-1+Z_j)/(p-1+(1+c)Z) * Y_ij`` for a ``k x p`` count matrix.

    Borrows strength across rows through column totals ``Z_j`` and across
    everything through the grand total ``Z``. Accepts ``(k, p)`` or a batch
    ``(n, k, p)``.
    """
    Y = as_array(Y)
    if Y.ndim < 2:
        raise ValueError("expected a k x p matrix")
    if Y.dtype != object:
        check_counts(Y)
    p = Y.shape[-1]
    zj = Y.sum(axis=-2, keepdims=True)
    z = Y.sum(axis=(-2, -1), keepdims=True)
    denom = p - 1 + (1 + c) * z
    with np.errstate(invalid="ignore", divide="ignore"):
        factor = (1 + c) * (p - 1 + zj) / denom
    if Y.dtype == object:
        return factor * Y
    return np.where(denom > 0, factor * Y, 0.0)
