"""Unconditional distribution surrogates built from conditional estimates.

The surrogate for the law of an unobserved response is the plain average
``(1/n) sum_i mu_hat(x_i)`` of conditional distribution estimates at the
measured covariates ``x_1..x_n``. Replacing each conditional by a point
mass at its mean gives the regression-imputation baseline, which loses the
within-conditional variance.
"""
from __future__ import annotations

import logging
import math
import warnings

import numpy as np

from .errors import EmptyList, MixedBandwidth, NonPositiveInput, OutOfDomain
from .mixture import MixtureDistribution

log = logging.getLogger(__name__)

SILVERMAN_CONSTANT = 1.06
GUMBEL_CLIP = 1e-12


class SurrogateDistribution(MixtureDistribution):
    """Average of ``n_conditionals`` mixtures, flattened into one mixture."""

    weight_tol = 1e-9

    def __init__(self, means, weights, sigma=0.0, deficit=0.0, n_conditionals=1):
        super().__init__(means, weights, sigma, deficit)
        self.n_conditionals = int(n_conditionals)

    def _rebuild(self, means, weights):
        return SurrogateDistribution(means, weights, self.sigma, self.deficit, self.n_conditionals)


def _merge(means, weights):
    uniq, inv = np.unique(means, return_inverse=True)
    return uniq, np.bincount(inv.ravel(), weights=weights, minlength=uniq.shape[0])


def aggregate(conditionals) -> SurrogateDistribution:
    """Equal-weight average of conditional mixtures sharing one bandwidth."""
    conditionals = list(conditionals)
    if not conditionals:
        raise EmptyList("nothing to aggregate")
    sigma = conditionals[0].sigma
    if any(c.sigma != sigma for c in conditionals):
        raise MixedBandwidth("all conditionals must share one bandwidth")
    n = len(conditionals)
    means = np.concatenate([c.means for c in conditionals])
    weights = np.concatenate([c.weights for c in conditionals]) / n
    means, weights = _merge(means, weights)
    deficit = math.fsum(c.deficit for c in conditionals) / n
    return SurrogateDistribution(means, weights, sigma, deficit, n)


def aggregate_neighbor_responses(responses, sigma: float = 0.0) -> SurrogateDistribution:
    """Surrogate from an ``(n, k)`` matrix of kNN responses.

    Same result as aggregating the n kNN conditionals, computed in one pass:
    every pooled response carries weight ``1 / (n k)``.
    """
    r = np.asarray(responses, dtype=float)
    if r.ndim != 2 or r.size == 0:
        raise EmptyList("need a nonempty (n, k) response matrix")
    values, counts = np.unique(r, return_counts=True)
    return SurrogateDistribution(values, counts / r.size, sigma, 0.0, r.shape[0])


def aggregate_class_probs(probs, alphas, sigma: float = 0.0) -> SurrogateDistribution:
    """Surrogate from an ``(n, k+1)`` matrix of forest class probabilities."""
    p = np.asarray(probs, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    if p.ndim != 2 or p.shape[0] == 0:
        raise EmptyList("need a nonempty (n, k+1) probability matrix")
    if p.shape[1] != alphas.shape[0] + 1:
        raise ValueError("probability matrix must have one more column than there are thresholds")
    mean_p = np.clip(p.mean(axis=0), 0.0, 1.0)
    deficit = float(mean_p[-1])
    return SurrogateDistribution(alphas, mean_p[:-1], sigma, deficit, p.shape[0])


def empirical_distribution(values) -> MixtureDistribution:
    """Right-continuous empirical distribution with mass 1/n per value."""
    v = np.asarray(values, dtype=float).ravel()
    if v.shape[0] == 0:
        raise EmptyList("no values")
    uniq, counts = np.unique(v, return_counts=True)
    return MixtureDistribution(uniq, counts / v.shape[0], 0.0)


def cdf(dist: MixtureDistribution, t):
    return dist.cdf(t)


def quantile(dist: MixtureDistribution, level):
    return dist.quantile(level)


def moments(dist: MixtureDistribution):
    return dist.moments()


def gumbel_transform(p):
    """``-log(-log p)`` for ``0 < p < 1``."""
    a = np.asarray(p, dtype=float)
    if np.any(~(a > 0)) or np.any(~(a < 1)):
        raise OutOfDomain("the Gumbel transform needs 0 < p < 1")
    out = -np.log(-np.log(a))
    return float(out) if np.ndim(p) == 0 else out


def gumbel_curve(F, eps: float = GUMBEL_CLIP):
    """Transform CDF values after clipping to ``[eps, 1 - eps]``.

    Returns the transformed values and a mask of the clipped points.
    """
    F = np.asarray(F, dtype=float)
    clipped = (F < eps) | (F > 1 - eps)
    return gumbel_transform(np.clip(F, eps, 1 - eps)), clipped


def silverman_bandwidth(k_neighbors: int, n_measured: int, pooled_std: float) -> float:
    """Rule-of-thumb bandwidth ``1.06 (k n)^(-1/5) s`` for Gaussian smoothing.

    ``pooled_std`` is the sample standard deviation of the ``k n`` simulated
    responses pooled over all kNN conditionals.
    """
    if k_neighbors <= 0 or n_measured <= 0:
        raise NonPositiveInput("k and n must be positive")
    if pooled_std < 0 or not math.isfinite(pooled_std):
        raise NonPositiveInput("pooled standard deviation must be finite and >= 0")
    if pooled_std == 0:
        warnings.warn("pooled response sample is degenerate; bandwidth is 0", RuntimeWarning,
                      stacklevel=2)
        return 0.0
    return SILVERMAN_CONSTANT * float(k_neighbors * n_measured) ** -0.2 * pooled_std


def pooled_std(neighbor_responses) -> float:
    r = np.asarray(neighbor_responses, dtype=float).ravel()
    return float(np.std(r, ddof=1)) if r.shape[0] > 1 else 0.0


def regression_imputation_baseline(measured_x, knn_model) -> SurrogateDistribution:
    """Point mass at the kNN conditional mean of each measured point, averaged."""
    r = knn_model.neighbor_responses(measured_x)
    means = r.mean(axis=1)
    values, counts = np.unique(means, return_counts=True)
    return SurrogateDistribution(values, counts / means.shape[0], 0.0, 0.0, means.shape[0])
