"""kNN distance screening of measurements and simulations.

A point's outlier score is its average distance to the k nearest points of
a reference set. Scores are sorted and a threshold rank ``tau`` is chosen
where the sorted curve bends: ``tau`` minimizes the L1 distance between the
piecewise-linear interpolant ``f`` of all sorted scores and the three-knot
interpolant ``f_tau`` through the first, ``tau``-th and last score. Points
whose score is at least the ``tau``-th smallest are flagged.

The same machinery runs in both directions: measurements are screened
against simulations (``screen_outliers``) and simulations far from every
measurement are trimmed (``trim_simulations``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .datamodel import Dataset, ScreeningReport
from .errors import NotSorted, TooFewPoints
from .neighbors import NeighborIndex, avg_knn_distances

FLAT_RTOL = 1e-12
# L1 errors within this fraction of the curve's bounding area count as tied
TIE_RTOL = 1e-12
MEASUREMENT_K = 10
TRIM_K = 1


@numba.njit(cache=True, inline="always")
def _segment_abs_integral(a, b):
    # integral over a unit interval of |linear function| with end values a, b
    if a * b >= 0.0:
        return 0.5 * (abs(a) + abs(b))
    return (a * a + b * b) / (2.0 * (abs(a) + abs(b)))


@numba.njit(cache=True, nogil=True)
def _l1_errors(d):
    n = d.shape[0]
    out = np.empty(n - 2)
    d0 = d[0]
    dn = d[n - 1]
    for t in range(1, n - 1):
        dt = d[t]
        s = 0.0
        prev = 0.0
        for i in range(1, t + 1):
            if i == t:
                cur = 0.0
            else:
                cur = d[i] - (d0 + (dt - d0) * (i / t))
            s += _segment_abs_integral(prev, cur)
            prev = cur
        span = n - 1 - t
        for i in range(t + 1, n):
            if i == n - 1:
                cur = 0.0
            else:
                cur = d[i] - (dt + (dn - dt) * ((i - t) / span))
            s += _segment_abs_integral(prev, cur)
            prev = cur
        out[t - 1] = s
    return out


@dataclass(frozen=True)
class ThresholdSelection:
    """Threshold chosen on a sorted score curve.

    ``tau`` is 1-based: the threshold is the ``tau``-th smallest score.
    ``raw_l1[i]`` is the L1 error for ``tau = taus[i]``, ``taus = 2..n-1``.
    """

    tau: int
    threshold: float
    raw_l1: np.ndarray
    normalized_l1: np.ndarray

    @property
    def taus(self) -> np.ndarray:
        return np.arange(2, self.raw_l1.shape[0] + 2)


def l1_errors(sorted_d) -> np.ndarray:
    """``int_1^n |f - f_tau|`` for every ``tau`` in ``2..n-1``, exactly."""
    d = _check_sorted(sorted_d)
    return _l1_errors(d)


def _check_sorted(sorted_d):
    d = np.ascontiguousarray(sorted_d, dtype=float).ravel()
    if d.shape[0] < 3:
        raise TooFewPoints(f"threshold selection needs at least 3 points, got {d.shape[0]}")
    if not np.all(np.isfinite(d)):
        raise ValueError("distances must be finite")
    if np.any(np.diff(d) < 0):
        raise NotSorted("distances must be sorted ascending")
    return d


def l1_threshold(sorted_d) -> ThresholdSelection:
    """Pick the bend of an ascending curve; the smallest minimizing ``tau`` wins ties.

    Errors closer to the minimum than ``TIE_RTOL * (d[-1] - d[0]) * (n - 1)``
    are treated as ties, so rounding noise cannot move ``tau`` on a
    straight curve.
    """
    d = _check_sorted(sorted_d)
    raw = _l1_errors(d)
    tol = TIE_RTOL * float(d[-1] - d[0]) * (d.shape[0] - 1)
    i = int(np.flatnonzero(raw <= raw.min() + tol)[0])
    peak = raw.max()
    norm = raw / peak if peak > 0 else np.zeros_like(raw)
    return ThresholdSelection(i + 2, float(d[i + 1]), raw, norm)


def is_flat(d) -> bool:
    d = np.asarray(d, dtype=float)
    top = float(d.max())
    return float(top - d.min()) < FLAT_RTOL * max(1.0, top)


def report_from_scores(scores, k: int, threshold: Optional[float] = None) -> ScreeningReport:
    """Threshold an array of outlier scores.

    With ``threshold=None`` the L1 rule picks it; otherwise the given value
    is used as is (manual override) and the L1 curve is kept for plotting
    when there are enough points.
    """
    scores = np.asarray(scores, dtype=float)
    order = np.argsort(scores, kind="stable")
    sd = scores[order]
    sel = l1_threshold(sd) if (threshold is None or sd.shape[0] >= 3) else None
    raw = sel.raw_l1 if sel is not None else np.empty(0)
    norm = sel.normalized_l1 if sel is not None else np.empty(0)
    if threshold is not None:
        thr = float(threshold)
        tau = int(np.searchsorted(sd, thr, side="left")) + 1
        flags = scores >= thr
        flat = False
    else:
        thr, tau = sel.threshold, sel.tau
        flat = is_flat(sd)
        flags = np.zeros(scores.shape[0], dtype=bool) if flat else scores >= thr
    return ScreeningReport(scores, order, tau, thr, norm, flags, int(k), flat,
                           threshold is not None, raw)


def _points(data):
    return data.X if isinstance(data, Dataset) else np.asarray(data, dtype=float)


def screen_outliers(measured, sim_index: NeighborIndex, k: int = MEASUREMENT_K,
                    threshold: Optional[float] = None) -> ScreeningReport:
    """Flag measured points far from the simulations.

    ``measured`` (a :class:`Dataset` or matrix) must already be in the
    coordinates of ``sim_index``, i.e. standardized and whitened.
    """
    scores = avg_knn_distances(sim_index, _points(measured), k)
    return report_from_scores(scores, k, threshold)


def trim_simulations(sim, measured_index: NeighborIndex, k: int = TRIM_K,
                     threshold: Optional[float] = None):
    """Drop simulations far from every measurement.

    Returns the indices of the kept rows and the screening report of the
    simulations (flags mark discarded rows).
    """
    report = screen_outliers(sim, measured_index, k, threshold)
    return report.inliers, report
