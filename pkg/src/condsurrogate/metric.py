"""Standardization and quadratic-form distances.

The distance between covariate vectors is ``sqrt((x - y)^T M (x - y))``
with ``M`` either the identity (Euclidean) or the inverse sample covariance
(Mahalanobis). Both cases are handled through a lower-triangular factor
``L`` with ``M = (L^-1)^T L^-1``: distances are plain Euclidean norms in the
whitened coordinates ``L^-1 x``.

Standard deviations and covariances use the ``m - 1`` denominator.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .datamodel import Dataset, Origin
from .errors import DegenerateColumn, DimensionMismatch, NotPositiveDefinite, TooFewPoints

DEGENERATE_STD = 1e-12
DEFAULT_RIDGE_SCALE = 1e-9


class MetricKind(enum.Enum):
    EUCLIDEAN = "euclidean"
    MAHALANOBIS = "mahalanobis"


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        for name in ("means", "stds"):
            a = np.array(getattr(self, name), dtype=float).ravel()
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.means.shape != self.stds.shape:
            raise DimensionMismatch("means and stds differ in length")
        if np.any(self.stds <= 0):
            raise DegenerateColumn(int(np.flatnonzero(self.stds <= 0)[0]))

    @property
    def d(self) -> int:
        return self.means.shape[0]

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.d:
            raise DimensionMismatch(f"expected {self.d} columns, got {X.shape[-1]}")
        return (X - self.means) / self.stds

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.array(d["means"]), np.array(d["stds"]))


def fit_standardizer(sim: Dataset) -> Standardizer:
    """Column means and sample standard deviations of the simulated data."""
    if sim.origin is not Origin.SIMULATED:
        raise ValueError("standardization constants must come from the simulated dataset")
    if sim.n < 2:
        raise TooFewPoints("need at least 2 simulated rows to standardize")
    means = sim.X.mean(axis=0)
    stds = sim.X.std(axis=0, ddof=1)
    for j, s in enumerate(stds):
        if not s >= DEGENERATE_STD:
            raise DegenerateColumn(j, sim.column_names[j])
    return Standardizer(means, stds)


def apply_standardizer(s: Standardizer, data: Dataset) -> Dataset:
    """Standardize covariates with constants fitted elsewhere; responses are untouched."""
    return data.with_X(s.transform(data.X))


@dataclass(frozen=True)
class Whitener:
    kind: MetricKind
    factor: np.ndarray
    ridge: float = 0.0

    def __post_init__(self):
        L = np.array(self.factor, dtype=float)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise DimensionMismatch("whitening factor must be square")
        L.setflags(write=False)
        object.__setattr__(self, "factor", L)
        object.__setattr__(self, "kind", MetricKind(self.kind))

    @property
    def d(self) -> int:
        return self.factor.shape[0]

    def whiten(self, X: np.ndarray) -> np.ndarray:
        """Map points (rows) to coordinates where the metric is Euclidean."""
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.d:
            raise DimensionMismatch(f"expected dimension {self.d}, got {X.shape[-1]}")
        if self.kind is MetricKind.EUCLIDEAN:
            return X.copy()
        flat = X.reshape(-1, self.d)
        out = linalg.solve_triangular(self.factor, flat.T, lower=True, check_finite=False).T
        return out.reshape(X.shape)

    @property
    def metric_matrix(self) -> np.ndarray:
        """The matrix M of the quadratic form."""
        Linv = linalg.solve_triangular(self.factor, np.eye(self.d), lower=True)
        return Linv.T @ Linv

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "factor": self.factor.tolist(), "ridge": self.ridge}

    @classmethod
    def from_dict(cls, d: dict) -> "Whitener":
        return cls(MetricKind(d["kind"]), np.array(d["factor"], dtype=float), float(d["ridge"]))


def default_ridge(cov: np.ndarray) -> float:
    cov = np.atleast_2d(cov)
    return DEFAULT_RIDGE_SCALE * float(np.trace(cov)) / cov.shape[0]


def fit_whitener(data, kind=MetricKind.MAHALANOBIS, ridge: Optional[float] = None) -> Whitener:
    """Fit the metric on ``data`` (a :class:`Dataset` or a plain matrix).

    For the Mahalanobis kind the factor is the Cholesky factor of the sample
    covariance plus ``ridge * I``; ``ridge=None`` picks
    ``1e-9 * trace(cov) / d``.
    """
    X = data.X if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=float))
    kind = MetricKind(kind)
    d = X.shape[1]
    if kind is MetricKind.EUCLIDEAN:
        return Whitener(kind, np.eye(d), 0.0)
    if X.shape[0] < d + 1:
        raise TooFewPoints(f"Mahalanobis metric needs at least d+1={d + 1} rows, got {X.shape[0]}")
    cov = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
    if ridge is None:
        ridge = default_ridge(cov)
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    try:
        L = np.linalg.cholesky(cov + ridge * np.eye(d))
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(
            "sample covariance is not positive definite (collinear covariates?)"
        ) from None
    if not np.all(np.isfinite(L)) or np.any(np.diag(L) <= 0):
        raise NotPositiveDefinite("Cholesky factor is singular")
    return Whitener(kind, L, float(ridge))


def distance(w: Whitener, x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != (w.d,) or y.shape != (w.d,):
        raise DimensionMismatch(f"expected vectors of length {w.d}")
    diff = x - y
    if w.kind is MetricKind.MAHALANOBIS:
        diff = linalg.solve_triangular(w.factor, diff, lower=True, check_finite=False)
    return float(np.sqrt(np.dot(diff, diff)))
