"""Smoothed k-nearest-neighbour estimate of a conditional distribution.

The conditional law of the response at ``x`` is estimated by the equally
weighted mixture ``(1/k) sum_{i in I_k(x)} N(y_i, sigma)`` over the k
simulations closest to ``x``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import Dataset
from .errors import DimensionMismatch, KTooLarge, MissingResponse
from .metric import Whitener
from .mixture import MixtureDistribution
from .neighbors import Backend, NeighborIndex

DEFAULT_K = 10


@dataclass(frozen=True)
class KnnConditionalModel:
    index: NeighborIndex
    responses: np.ndarray
    k: int
    sigma: float
    whitener: Whitener

    @property
    def m(self) -> int:
        return self.responses.shape[0]

    def neighbors(self, X):
        """Indices of the k nearest simulations for each row of ``X``."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.whitener.d:
            raise DimensionMismatch(f"model has dimension {self.whitener.d}, got {X.shape[1]}")
        idx, _ = self.index.query(self.whitener.whiten(X), self.k)
        return idx

    def neighbor_responses(self, X) -> np.ndarray:
        """``(len(X), k)`` matrix of neighbour responses."""
        return self.responses[self.neighbors(X)]


def fit_knn(sim: Dataset, whitener: Whitener, k: int = DEFAULT_K, sigma: float = 0.0,
            backend=Backend.ACCELERATED, workers: int = 1) -> KnnConditionalModel:
    """Index the simulated covariates (in the whitener's coordinates)."""
    if sim.y is None:
        raise MissingResponse("simulated dataset has no response column")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > sim.n:
        raise KTooLarge(f"k={k} exceeds the {sim.n} simulated rows")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sim.d != whitener.d:
        raise DimensionMismatch("whitener and simulations differ in dimension")
    index = NeighborIndex(whitener.whiten(sim.X), backend, workers)
    return KnnConditionalModel(index, sim.y, int(k), float(sigma), whitener)


def mixture_from_neighbors(responses, sigma: float) -> MixtureDistribution:
    """Equal-weight mixture over neighbour responses, duplicates merged."""
    values, counts = np.unique(np.asarray(responses, dtype=float), return_counts=True)
    return MixtureDistribution(values, counts / responses.shape[0], sigma)


def knn_conditional(model: KnnConditionalModel, x) -> MixtureDistribution:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != model.whitener.d:
        raise DimensionMismatch(f"model has dimension {model.whitener.d}, got {x.shape[0]}")
    return mixture_from_neighbors(model.neighbor_responses(x)[0], model.sigma)


def knn_conditionals(model: KnnConditionalModel, X) -> list:
    return [mixture_from_neighbors(r, model.sigma) for r in model.neighbor_responses(X)]
