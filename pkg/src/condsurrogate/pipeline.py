"""End-to-end steps: trim simulations, screen measurements, estimate.

Covariates are standardized with constants from the simulations and, for
the Mahalanobis metric, whitened with the covariance of the standardized
simulations. Neighbour searches run in those whitened coordinates; the
forest is trained on standardized (not whitened) covariates, since its
axis-aligned splits are what the covariates' own axes mean.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .datamodel import Dataset, ScreeningReport
from .errors import MissingResponse
from .forest import DEFAULT_GRID_SIZE, Forest, ForestParams, ThresholdGrid, discretize_targets, fit_forest, quantile_grid
from .knn import DEFAULT_K, fit_knn
from .metric import MetricKind, Standardizer, Whitener, fit_standardizer, fit_whitener
from .neighbors import Backend, NeighborIndex
from .screening import MEASUREMENT_K, TRIM_K, screen_outliers, trim_simulations
from .surrogate import (
    SurrogateDistribution,
    aggregate_class_probs,
    aggregate_neighbor_responses,
    pooled_std,
    silverman_bandwidth,
)

SigmaPolicy = Union[float, str]


@dataclass(frozen=True)
class Geometry:
    standardizer: Standardizer
    whitener: Whitener

    def standardize(self, X) -> np.ndarray:
        return self.standardizer.transform(X)

    def coords(self, X) -> np.ndarray:
        """Standardized, whitened coordinates used for neighbour searches."""
        return self.whitener.whiten(self.standardizer.transform(X))

    def to_dict(self) -> dict:
        return {"standardizer": self.standardizer.to_dict(), "whitener": self.whitener.to_dict()}


def fit_geometry(sim: Dataset, metric=MetricKind.MAHALANOBIS, ridge: Optional[float] = None) -> Geometry:
    s = fit_standardizer(sim)
    w = fit_whitener(s.transform(sim.X), MetricKind(metric), ridge)
    return Geometry(s, w)


def trim(sim: Dataset, measured: Dataset, k: int = TRIM_K, metric=MetricKind.MAHALANOBIS,
         ridge: Optional[float] = None, threshold: Optional[float] = None,
         backend=Backend.ACCELERATED, workers: int = 1):
    """Discard simulations far from the measured covariates.

    Returns ``(kept_sim, report, geometry)``.
    """
    geo = fit_geometry(sim, metric, ridge)
    index = NeighborIndex(geo.coords(measured.X), backend, workers)
    kept, report = trim_simulations(geo.coords(sim.X), index, k, threshold)
    return sim.subset(kept), report, geo


def screen(measured: Dataset, sim: Dataset, k: int = MEASUREMENT_K, metric=MetricKind.MAHALANOBIS,
           ridge: Optional[float] = None, threshold: Optional[float] = None,
           backend=Backend.ACCELERATED, workers: int = 1):
    """Flag measured rows far from the simulations.

    Returns ``(inliers, outliers, report, geometry)``.
    """
    geo = fit_geometry(sim, metric, ridge)
    index = NeighborIndex(geo.coords(sim.X), backend, workers)
    report = screen_outliers(geo.coords(measured.X), index, k, threshold)
    return measured.subset(report.inliers), measured.subset(report.outliers), report, geo


@dataclass
class Estimate:
    surrogate: SurrogateDistribution
    estimator: str
    sigma: float
    sigma_policy: str
    k: int
    pooled_std: Optional[float]
    geometry: Geometry
    grid: Optional[ThresholdGrid] = None
    forest: Optional[Forest] = None
    class_probs: Optional[np.ndarray] = None
    neighbor_responses: Optional[np.ndarray] = None


def _resolve_sigma(policy: SigmaPolicy, k: int, n: int, responses) -> tuple:
    if isinstance(policy, str):
        p = policy.strip().lower()
        if p == "silverman":
            s = pooled_std(responses)
            return silverman_bandwidth(k, n, s), "silverman", s
        policy = float(p)
    sigma = float(policy)
    if not sigma >= 0:
        raise ValueError("sigma must be >= 0")
    return sigma, repr(sigma), None


def knn_responses(measured: Dataset, sim: Dataset, geo: Geometry, k: int,
                  backend=Backend.ACCELERATED, workers: int = 1) -> np.ndarray:
    model = fit_knn(sim.with_X(geo.standardize(sim.X)), geo.whitener, k, 0.0, backend, workers)
    return model.neighbor_responses(geo.standardize(measured.X))


def estimate(measured: Dataset, sim: Dataset, estimator: str = "knn", sigma: SigmaPolicy = 0.0,
             k: int = DEFAULT_K, grid: Optional[ThresholdGrid] = None,
             grid_size: int = DEFAULT_GRID_SIZE, forest_params: ForestParams = ForestParams(),
             seed: int = 0, metric=MetricKind.MAHALANOBIS, ridge: Optional[float] = None,
             backend=Backend.ACCELERATED, workers: int = 1) -> Estimate:
    """Surrogate distribution of the response at the measured covariates.

    ``sigma`` is a bandwidth, or ``"silverman"`` for the rule of thumb on
    the pooled kNN responses (used for both estimators).
    """
    if sim.y is None:
        raise MissingResponse("simulated dataset has no response column")
    estimator = estimator.lower()
    if estimator not in ("knn", "forest"):
        raise ValueError(f"unknown estimator {estimator!r}; choose 'knn' or 'forest'")
    geo = fit_geometry(sim, metric, ridge)
    need_knn = estimator == "knn" or (isinstance(sigma, str) and sigma.strip().lower() == "silverman")
    responses = knn_responses(measured, sim, geo, k, backend, workers) if need_knn else None
    sig, policy, s_hat = _resolve_sigma(sigma, k, measured.n, responses)

    if estimator == "knn":
        sur = aggregate_neighbor_responses(responses, sig)
        return Estimate(sur, "knn", sig, policy, k, s_hat, geo, neighbor_responses=responses)

    if grid is None:
        grid = quantile_grid(sim.y, grid_size)
    classes = discretize_targets(sim.y, grid)
    forest = fit_forest(geo.standardize(sim.X), classes, forest_params, seed,
                        n_classes=grid.n_classes, workers=workers)
    probs = forest.predict_proba(geo.standardize(measured.X))
    sur = aggregate_class_probs(probs, grid.alphas, sig)
    return Estimate(sur, "forest", sig, policy, k, s_hat, geo, grid, forest, probs, responses)
