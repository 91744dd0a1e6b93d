"""Weighted mixtures of Gaussians sharing one bandwidth.

Every estimated distribution in the package is a :class:`MixtureDistribution`:
components ``N(mean_i, sigma)`` with weights ``w_i``, where ``sigma = 0``
means point masses. A mixture may carry a ``deficit``, probability mass
that the estimator could not place anywhere; then the weights sum to
``1 - deficit`` and the CDF tops out at that value.

Point-mass CDFs are cumulative weights accumulated with Neumaier
summation, so mixtures with millions of components do not drift. Smoothed
CDFs sum per-component terms in 2^-62 fixed point: each term is rounded
down to an integer, integer sums are exact, and the result is therefore
exactly monotone in ``t`` whatever the number of components.
"""
from __future__ import annotations

import math

import numba
import numpy as np

from .errors import DimensionMismatch, LevelBeyondDeficit

QUANTILE_XTOL = 1e-10
BRACKET_SIGMAS = 12.0
# components further than this many bandwidths from t count as 0 or 1
_CUTOFF_SIGMAS = 12.0


@numba.njit(cache=True, nogil=True)
def _compensated_cumsum(w):
    out = np.empty(w.shape[0])
    s = 0.0
    c = 0.0
    for i in range(w.shape[0]):
        x = w[i]
        t = s + x
        if abs(s) >= abs(x):
            c += (s - t) + x
        else:
            c += (x - t) + s
        s = t
        out[i] = s + c
    return out


_FIXED_SCALE = 2.0 ** 62


@numba.njit(cache=True, nogil=True)
def _smoothed_cdf(t, means, weights, icum, sigma, cutoff):
    # icum[i]: exact integer prefix sum of floor(w * 2^62) over components 0..i.
    # Components more than `cutoff` bandwidths below t count in full, those
    # above count zero; a partial term never exceeds the full one, so the
    # sum is nondecreasing in t.
    out = np.empty(t.shape[0])
    inv = 1.0 / (sigma * math.sqrt(2.0))
    for j in range(t.shape[0]):
        tj = t[j]
        lo = np.searchsorted(means, tj - cutoff * sigma, side="left")
        hi = np.searchsorted(means, tj + cutoff * sigma, side="right")
        s = icum[lo - 1] if lo > 0 else np.int64(0)
        for i in range(lo, hi):
            x = weights[i] * (0.5 * math.erfc(-(tj - means[i]) * inv))
            s += np.int64(math.floor(x * _FIXED_SCALE))
        out[j] = s / _FIXED_SCALE
    return out


def _readonly(a, dtype=float):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


class MixtureDistribution:
    """``sum_i w_i N(mean_i, sigma)`` plus an optional unplaced ``deficit``.

    Components are stored sorted by mean (stable, so equal means keep their
    input order). Instances are immutable.
    """

    weight_tol = 1e-12

    def __init__(self, means, weights, sigma: float = 0.0, deficit: float = 0.0):
        means = np.asarray(means, dtype=float).ravel()
        weights = np.asarray(weights, dtype=float).ravel()
        if means.shape != weights.shape:
            raise DimensionMismatch("means and weights must have equal length")
        if means.shape[0] == 0:
            raise ValueError("a mixture needs at least one component")
        if not np.all(np.isfinite(means)) or not np.all(np.isfinite(weights)):
            raise ValueError("means and weights must be finite")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        sigma = float(sigma)
        deficit = float(deficit)
        if not sigma >= 0 or not math.isfinite(sigma):
            raise ValueError("bandwidth must be finite and >= 0")
        if not 0 <= deficit <= 1:
            raise ValueError("deficit must lie in [0, 1]")
        total = math.fsum(weights)
        if abs(total + deficit - 1.0) > self.weight_tol:
            raise ValueError(f"weights sum to {total!r}, expected {1 - deficit!r}")
        order = np.argsort(means, kind="stable")
        self.means = _readonly(means[order])
        self.weights = _readonly(weights[order])
        self.sigma = sigma
        self.deficit = deficit
        self._cum = _readonly(np.maximum.accumulate(_compensated_cumsum(self.weights)))
        self._icum = None

    def __repr__(self):
        return (f"{type(self).__name__}(n_components={len(self.means)}, "
                f"sigma={self.sigma!r}, deficit={self.deficit!r})")

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def total_weight(self) -> float:
        return float(self._cum[-1])

    @property
    def ceiling(self) -> float:
        """Supremum of the CDF."""
        return 1.0 - self.deficit

    def merged(self):
        """Equivalent mixture with equal means merged into one component."""
        uniq, inv = np.unique(self.means, return_inverse=True)
        if uniq.shape[0] == self.means.shape[0]:
            return self
        w = np.bincount(inv, weights=self.weights, minlength=uniq.shape[0])
        return self._rebuild(uniq, w)

    def _rebuild(self, means, weights):
        return MixtureDistribution(means, weights, self.sigma, self.deficit)

    def cdf(self, t):
        """``P(Y <= t)``; right-continuous, with ``Phi(./0)`` the unit step at 0."""
        scalar = np.ndim(t) == 0
        tt = np.atleast_1d(np.asarray(t, dtype=float)).ravel()
        if self.sigma == 0.0:
            pos = np.searchsorted(self.means, tt, side="right")
            out = np.where(pos > 0, self._cum[np.maximum(pos - 1, 0)], 0.0)
        else:
            if self._icum is None:
                self._icum = _readonly(
                    np.cumsum(np.floor(self.weights * _FIXED_SCALE).astype(np.int64)), np.int64)
            out = _smoothed_cdf(tt, self.means, self.weights, self._icum, self.sigma, _CUTOFF_SIGMAS)
        out = np.clip(out, 0.0, None)
        if scalar:
            return float(out[0])
        return out.reshape(np.shape(t))

    def quantile(self, level):
        """Left-continuous generalized inverse ``inf{t : F(t) >= level}``."""
        if np.ndim(level) > 0:
            return np.array([self.quantile(float(a)) for a in np.ravel(level)]).reshape(np.shape(level))
        a = float(level)
        if not 0.0 < a < 1.0:
            raise ValueError("quantile level must lie strictly between 0 and 1")
        if a > self.ceiling:
            raise LevelBeyondDeficit(
                f"level {a} exceeds the located mass {self.ceiling}; the tail beyond the "
                "last threshold has no location")
        if self.sigma == 0.0:
            i = int(np.searchsorted(self._cum, a, side="left"))
            if i >= self.n_components:
                # a == ceiling up to the last rounding of the cumulative sum
                i = self.n_components - 1
            return float(self.means[i])
        lo = float(self.means[0]) - BRACKET_SIGMAS * self.sigma
        hi = float(self.means[-1]) + BRACKET_SIGMAS * self.sigma
        while hi - lo > QUANTILE_XTOL:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if self.cdf(mid) >= a:
                hi = mid
            else:
                lo = mid
        return hi

    def moments(self):
        """Mean and variance of the located mass (the deficit is excluded)."""
        w = self.weights
        tw = math.fsum(w)
        mean = math.fsum(w * self.means) / tw
        var = math.fsum(w * (self.means - mean) ** 2) / tw + self.sigma ** 2
        return mean, var
