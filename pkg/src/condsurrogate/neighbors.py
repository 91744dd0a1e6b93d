"""Exact k-nearest-neighbour queries with deterministic tie-breaking.

Points are stored in whitened coordinates, so the metric is always
Euclidean. Results are ordered by ``(distance, original index)``; both
backends compute final distances with the same routine, which makes their
output bit-identical.

The accelerated backend uses :class:`scipy.spatial.cKDTree` only to
propose candidates. Candidates are re-scored with :func:`row_distances` and
completed by a ball query whenever the tree's candidate list might miss a
point tied with the k-th neighbour.
"""
from __future__ import annotations

import enum
import logging
import threading

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionMismatch, EmptyPointSet

log = logging.getLogger(__name__)

# relative slack used when deciding whether the tree candidates are complete
_SLACK = 1e-9
_EXTRA = 4
_CHUNK = 2048


class Backend(enum.Enum):
    BRUTE_FORCE = "brute"
    ACCELERATED = "tree"


def row_distances(P: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Euclidean distances from ``x`` to each row of ``P``.

    ``x`` broadcasts against ``P``. Squared coordinate differences are
    accumulated column by column in a fixed order, so a distance depends
    only on the two points and never on which other rows are present.
    """
    diff = P - x
    acc = diff[..., 0] * diff[..., 0]
    for j in range(1, P.shape[-1]):
        acc = acc + diff[..., j] * diff[..., j]
    return np.sqrt(acc)


class NeighborIndex:
    """Immutable index over ``p`` points in ``d`` dimensions."""

    def __init__(self, points, backend=Backend.ACCELERATED, workers: int = 1):
        P = np.array(points, dtype=float, copy=True)
        if P.ndim == 1:
            P = P.reshape(-1, 1)
        if P.ndim != 2 or P.shape[0] == 0:
            raise EmptyPointSet("cannot index an empty point set")
        P.setflags(write=False)
        self.points = P
        self.backend = Backend(backend)
        self.workers = int(workers)
        self._tree = cKDTree(P, leafsize=16, balanced_tree=False) if self.backend is Backend.ACCELERATED else None
        self._lock = threading.Lock()
        self.truncated_queries = 0

    @property
    def p(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def _check(self, Q):
        Q = np.asarray(Q, dtype=float)
        if Q.ndim == 1:
            Q = Q.reshape(1, -1) if self.d > 1 or Q.shape[0] == 1 else Q.reshape(-1, 1)
        if Q.ndim != 2 or Q.shape[1] != self.d:
            raise DimensionMismatch(f"index has dimension {self.d}, query has shape {np.shape(Q)}")
        return Q

    def _effective_k(self, k, nq):
        if k < 1:
            raise ValueError("k must be >= 1")
        if k > self.p:
            with self._lock:
                self.truncated_queries += nq
            log.warning("k=%d exceeds the %d indexed points; truncating", k, self.p)
            return self.p
        return int(k)

    def query(self, Q, k: int):
        """k nearest neighbours of every row of ``Q``.

        Returns ``(indices, distances)``, both of shape ``(len(Q), min(k, p))``.
        """
        Q = self._check(Q)
        k = self._effective_k(k, Q.shape[0])
        if Q.shape[0] == 0:
            return np.empty((0, k), dtype=np.intp), np.empty((0, k))
        if self.backend is Backend.BRUTE_FORCE:
            return self._brute(Q, k)
        return self._tree_query(Q, k)

    def _brute(self, Q, k):
        idx = np.empty((Q.shape[0], k), dtype=np.intp)
        dist = np.empty((Q.shape[0], k))
        order_key = np.arange(self.p)
        for i, q in enumerate(Q):
            dd = row_distances(self.points, q)
            o = np.lexsort((order_key, dd))[:k]
            idx[i] = o
            dist[i] = dd[o]
        return idx, dist

    def _tree_query(self, Q, k):
        nq = Q.shape[0]
        kk = min(k + _EXTRA, self.p)
        idx = np.empty((nq, k), dtype=np.intp)
        dist = np.empty((nq, k))
        for start in range(0, nq, _CHUNK):
            Qc = Q[start:start + _CHUNK]
            _, cand = self._tree.query(Qc, k=kk, workers=self.workers)
            cand = np.asarray(cand, dtype=np.intp).reshape(len(Qc), kk)
            cd = row_distances(self.points[cand], Qc[:, None, :])
            order = np.lexsort((cand, cd), axis=-1)
            cand = np.take_along_axis(cand, order, axis=-1)
            cd = np.take_along_axis(cd, order, axis=-1)
            kth = cd[:, k - 1]
            if kk == self.p:
                complete = np.ones(len(Qc), dtype=bool)
            else:
                # every point closer than the worst candidate is a candidate
                complete = cd[:, -1] > kth * (1 + _SLACK) + 1e-300
            idx[start:start + len(Qc)] = cand[:, :k]
            dist[start:start + len(Qc)] = cd[:, :k]
            for r in np.flatnonzero(~complete):
                q = Qc[r]
                radius = kth[r] * (1 + 2 * _SLACK) + 1e-300
                ball = np.asarray(self._tree.query_ball_point(q, radius), dtype=np.intp)
                bd = row_distances(self.points[ball], q)
                o = np.lexsort((ball, bd))[:k]
                idx[start + r] = ball[o]
                dist[start + r] = bd[o]
        return idx, dist


def build_index(points, backend=Backend.ACCELERATED, workers: int = 1) -> NeighborIndex:
    return NeighborIndex(points, backend, workers)


def query_knn(idx: NeighborIndex, x, k: int):
    """Neighbours of a single point as a list of ``(point_index, distance)``."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != idx.d:
        raise DimensionMismatch(f"index has dimension {idx.d}, query has {x.shape[0]}")
    i, d = idx.query(x.reshape(1, -1), k)
    return [(int(a), float(b)) for a, b in zip(i[0], d[0])]


def avg_knn_distance(idx: NeighborIndex, x, k: int) -> float:
    return float(np.mean([d for _, d in query_knn(idx, x, k)]))


def avg_knn_distances(idx: NeighborIndex, Q, k: int) -> np.ndarray:
    """Vectorised :func:`avg_knn_distance` over the rows of ``Q``."""
    _, d = idx.query(Q, k)
    return d.mean(axis=1)
