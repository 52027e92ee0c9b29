"""Shared domain types, loss functions and loss-matrix builders.

Estimates are plain numpy arrays. Every loss accepts a batch of estimates
with shape ``(..., p)`` so Monte Carlo drivers can evaluate many replicates
at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Mapping

import numpy as np

SYMMETRY_TOL = 1e-12
PROPORTION_TOL = 1e-12


def as_array(x: Any) -> np.ndarray:
    """Convert input to a float array, keeping object arrays of Fractions.

    Object dtype is preserved so the estimators can be run in exact rational
    arithmetic when the caller supplies ``Fraction`` inputs.
    """
    arr = np.asarray(x)
    if arr.dtype == object:
        return arr
    return arr.astype(float)


def is_exact(*arrays: Any) -> bool:
    return any(np.asarray(a).dtype == object or isinstance(a, Fraction) for a in arrays)


@dataclass(frozen=True)
class MeanVector:
    """Positive Poisson rates ``theta``; sum and proportions are derived."""

    theta: np.ndarray

    def __post_init__(self) -> None:
        theta = np.array(self.theta, dtype=float)
        if theta.ndim != 1 or theta.size < 1:
            raise ValueError("theta must be a non-empty 1-D vector")
        if not np.all(np.isfinite(theta)) or np.any(theta <= 0):
            raise ValueError("every rate must be finite and strictly positive")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def p(self) -> int:
        return self.theta.size

    @property
    def gamma(self) -> float:
        return float(self.theta.sum())

    @property
    def proportions(self) -> np.ndarray:
        return self.theta / self.theta.sum()

    @property
    def mean(self) -> float:
        return self.gamma / self.p

    @classmethod
    def from_sum(cls, gamma: float, proportions: Any) -> "MeanVector":
        pi = np.asarray(proportions, dtype=float)
        if abs(pi.sum() - 1.0) > PROPORTION_TOL:
            raise ValueError("proportions must sum to one")
        return cls(gamma * pi)


@dataclass(frozen=True)
class CountVector:
    y: np.ndarray

    def __post_init__(self) -> None:
        y = check_counts(self.y)
        if y.ndim != 1:
            raise ValueError("a count vector is 1-D")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @property
    def p(self) -> int:
        return self.y.size

    @property
    def total(self) -> int:
        return int(self.y.sum())

    @property
    def mean(self) -> float:
        return self.total / self.p


@dataclass(frozen=True)
class CountMatrix:
    """``k x p`` grid of counts: rows are processes, columns are time cells."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = check_counts(self.counts)
        if counts.ndim != 2:
            raise ValueError("a count matrix is 2-D")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    @property
    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def column_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def check_counts(y: Any) -> np.ndarray:
    """Validate nonnegative integer counts and return them as an int array."""
    arr = np.asarray(y)
    if arr.size == 0 or 0 in arr.shape:
        raise ValueError("empty count input")
    if arr.dtype == object:
        if not all(v == int(v) for v in arr.flat):
            raise ValueError("counts must be integers")
        arr = arr.astype(np.int64)
    elif not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.isfinite(arr)) or not np.all(arr == np.round(arr)):
            raise ValueError("counts must be integers")
        arr = arr.astype(np.int64)
    if np.any(arr < 0):
        raise ValueError("counts must be nonnegative")
    return np.array(arr, dtype=np.int64)


# ---------------------------------------------------------------------------
# Loss functions


class LossSpec:
    kind: str = ""

    def evaluate(self, theta: Any, delta: Any) -> Any:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class QuadraticForm(LossSpec):
    """Loss ``(delta - theta)' A (delta - theta)`` for symmetric positive-definite A."""

    A: np.ndarray
    kind = "quadratic"

    def __post_init__(self) -> None:
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if np.max(np.abs(A - A.T), initial=0.0) > SYMMETRY_TOL:
            raise ValueError("A must be symmetric")
        if smallest_eigenvalue(A) <= 0:
            raise ValueError("A must be positive definite")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    def evaluate(self, theta, delta):
        theta = np.asarray(theta, dtype=float)
        diff = np.asarray(delta, dtype=float) - theta
        _check_dims(self.A.shape[0], diff)
        return np.einsum("...i,ij,...j->...", diff, self.A, diff)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "A": self.A.tolist()}


@dataclass(frozen=True)
class WeightedLc(LossSpec):
    """Weighted squared error plus a penalty ``c (sum(delta) - gamma)^2 / gamma``."""

    c: float = 0.0
    kind = "Lc"

    def __post_init__(self) -> None:
        if self.c < 0:
            raise ValueError("c must be nonnegative")

    def evaluate(self, theta, delta):
        theta = _positive_theta(theta)
        delta = as_array(delta)
        _check_dims(theta.shape[-1], delta)
        gamma = theta.sum(axis=-1)
        weighted = ((delta - theta) ** 2 / theta).sum(axis=-1)
        return weighted + self.c * (delta.sum(axis=-1) - gamma) ** 2 / gamma

    def to_dict(self) -> dict:
        return {"kind": self.kind, "c": self.c}


@dataclass(frozen=True)
class WeightedW(LossSpec):
    """Importance-weighted loss ``sum w_i (delta_i - theta_i)^2 / theta_i``."""

    w: np.ndarray
    kind = "Lw"

    def __post_init__(self) -> None:
        w = np.array(self.w, dtype=float)
        if w.ndim != 1 or np.any(w <= 0) or np.any(w > 1):
            raise ValueError("weights must lie in (0, 1]")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def envelope(self) -> tuple[float, float]:
        return float(self.w.min()), float(self.w.max())

    def evaluate(self, theta, delta):
        theta = _positive_theta(theta)
        delta = as_array(delta)
        _check_dims(self.w.size, delta)
        return (self.w * (delta - theta) ** 2 / theta).sum(axis=-1)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "w": self.w.tolist()}


@dataclass(frozen=True)
class MatrixLc(LossSpec):
    """Row-wise sum of ``L_c`` over a ``k x p`` parameter matrix."""

    c: float = 0.0
    kind = "matrix_Lc"

    def evaluate(self, theta, delta):
        theta = _positive_theta(theta)
        delta = as_array(delta)
        if delta.shape[-2:] != theta.shape[-2:]:
            raise ValueError(f"shape mismatch: {delta.shape} vs {theta.shape}")
        return WeightedLc(self.c).evaluate(theta, delta).sum(axis=-1)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "c": self.c}


def eval_loss(loss: LossSpec, theta: Any, delta: Any) -> Any:
    """Evaluate ``loss`` at parameter ``theta`` for estimate(s) ``delta``.

    ``delta`` may carry leading batch axes; the result then has the batch
    shape. Raises ``ValueError`` on dimension mismatch or, for the weighted
    losses, a nonpositive rate.
    """
    if isinstance(theta, MeanVector):
        theta = theta.theta
    return loss.evaluate(theta, delta)


def _positive_theta(theta: Any) -> np.ndarray:
    theta = as_array(theta)
    if np.any(theta <= 0):
        raise ValueError("weighted losses need strictly positive rates")
    return theta


def _check_dims(p: int, delta: np.ndarray) -> None:
    if delta.shape[-1] != p:
        raise ValueError(f"dimension mismatch: expected {p}, got {delta.shape[-1]}")


# ---------------------------------------------------------------------------
# Loss matrices


def build_sum_penalty_matrix(p: int, c: float) -> np.ndarray:
    """``I + c e e'``: squared error plus ``c`` times squared error of the sum.

    Its spectrum is ``{1 (p-1 times), 1 + c p}`` so the smallest eigenvalue,
    and hence the bound constant, is 1.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    if c < 0:
        raise ValueError("c must be nonnegative")
    return np.eye(p) + c * np.ones((p, p))


CUMULATIVE_BOUND_M = 4.0


def build_cumulative_matrix(p: int) -> np.ndarray:
    """Matrix with ``a_ij = p + 1 - max(i, j)``.

    With it, the quadratic form equals the squared error summed over the
    cumulative sums ``lambda_i = theta_1 + ... + theta_i``. Its inverse is the
    second-difference stencil, whose largest eigenvalue is below 4, so
    ``CUMULATIVE_BOUND_M`` is a valid (conservative) bound constant.
    """
    if p < 2:
        raise ValueError("p must be at least 2")
    idx = np.arange(1, p + 1)
    return (p + 1 - np.maximum.outer(idx, idx)).astype(float)


def smallest_eigenvalue(A: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(np.asarray(A, dtype=float))[0])


def loss_matrix_bound_M(A: Any) -> float:
    """Inverse of the smallest eigenvalue of ``A``.

    Guarantees ``psi' A^{-1} psi <= M * sum(psi**2)`` for every ``psi``.
    """
    A = QuadraticForm(A).A
    return 1.0 / smallest_eigenvalue(A)


# ---------------------------------------------------------------------------
# JSON round-trip


def resolve_matrix(spec: Any, p: int) -> np.ndarray:
    """Turn a matrix description into an array for dimension ``p``.

    Accepts a literal nested list or ``{"kind": "identity" | "sum_penalty" |
    "cumulative", ...}``.
    """
    if isinstance(spec, Mapping):
        kind = spec.get("kind")
        if kind == "identity":
            return np.eye(p)
        if kind == "sum_penalty":
            return build_sum_penalty_matrix(p, float(spec.get("c", 0.0)))
        if kind == "cumulative":
            return build_cumulative_matrix(p)
        raise ValueError(f"unknown matrix kind {kind!r}")
    A = np.asarray(spec, dtype=float)
    if A.shape != (p, p):
        raise ValueError(f"matrix shape {A.shape} does not match p={p}")
    return A


def loss_from_dict(d: Mapping, p: int | None = None) -> LossSpec:
    kind = d.get("kind")
    if kind == "quadratic":
        A = d["A"]
        if isinstance(A, Mapping):
            if p is None:
                raise ValueError("p is needed to build a named matrix")
            A = resolve_matrix(A, p)
        return QuadraticForm(np.asarray(A, dtype=float))
    if kind == "Lc":
        return WeightedLc(float(d.get("c", 0.0)))
    if kind == "Lw":
        return WeightedW(np.asarray(d["w"], dtype=float))
    if kind == "matrix_Lc":
        return MatrixLc(float(d.get("c", 0.0)))
    raise ValueError(f"unknown loss kind {kind!r}")
