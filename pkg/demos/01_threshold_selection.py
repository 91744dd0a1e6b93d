"""Choosing an outlier threshold from the sorted-score curve.

Sorted average-kNN scores rise slowly through the bulk of the data and
steeply through the outliers. The selector picks the rank whose
three-point linear interpolant of the curve has the smallest L1 gap.
"""
import numpy as np

from condsurrogate.screening import l1_threshold, report_from_scores

rng = np.random.default_rng(0)

# a clean kink: slope 1 up to rank 40, slope 6 afterwards
i = np.arange(1, 61, dtype=float)
curve = np.where(i <= 40, i, 40 + 6 * (i - 40))
sel = l1_threshold(curve)
print(f"kinked curve: tau = {sel.tau}, threshold = {sel.threshold}")

# realistic scores: a gamma bulk plus a handful of large values
scores = np.concatenate([rng.gamma(4.0, 0.25, size=300), rng.uniform(4, 8, size=12)])
rep = report_from_scores(scores, k=10)
print(f"scores: tau = {rep.tau} of {len(scores)}, threshold = {rep.threshold:.3f}, "
      f"flagged = {rep.n_outliers}")

# the minimum of the L1 curve marks tau
best = int(np.argmin(rep.l1_curve)) + 2
print(f"argmin of the L1 curve is rank {best}")
