"""Random-forest estimate of a conditional CDF on a grid of thresholds.

The response is discretized into the ordinal class ``C = #{j : y > alpha_j}``
for thresholds ``alpha_1 < ... < alpha_k``. A random forest of Gini
classification trees estimates ``p_j(x) = P(C = j | X = x)`` by soft voting
and the conditional CDF at ``alpha_i`` is ``sum_{j <= i} p_{j-1}(x)``,
optionally smoothed with a Gaussian of width ``sigma``.

Mass ``p_k(x)`` above the last threshold has no location; it is kept as an
explicit deficit of the resulting mixture.

Reproducibility
---------------
Training rows are put in a canonical (lexicographic) order before
resampling, so the forest does not depend on the input row order. The
bootstrap for tree ``t`` comes from a Philox generator keyed by
``(seed, t)``; feature subsampling inside the tree uses a splitmix64 hash
of the same key and the node number. Trees are therefore identical whether
trained sequentially or on a thread pool.
"""
from __future__ import annotations

import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from .errors import ClassOutOfRange, DimensionMismatch, EmptyTraining
from .mixture import MixtureDistribution

FOREST_FORMAT = "condsurrogate.forest"
FOREST_VERSION = 1
DEFAULT_GRID_SIZE = 64


@dataclass(frozen=True)
class ThresholdGrid:
    alphas: np.ndarray

    def __post_init__(self):
        a = np.array(self.alphas, dtype=float).ravel()
        if a.shape[0] < 1:
            raise ValueError("a threshold grid needs at least one threshold")
        if not np.all(np.isfinite(a)):
            raise ValueError("thresholds must be finite")
        if np.any(np.diff(a) <= 0):
            raise ValueError("thresholds must be strictly increasing")
        a.setflags(write=False)
        object.__setattr__(self, "alphas", a)

    @property
    def k(self) -> int:
        return self.alphas.shape[0]

    @property
    def n_classes(self) -> int:
        return self.k + 1


def quantile_grid(y, size: int = DEFAULT_GRID_SIZE) -> ThresholdGrid:
    """Empirical quantiles of ``y`` at levels ``(i - 0.5) / size``, deduplicated.

    Quantiles are the left-continuous inverse of the empirical CDF.
    """
    y = np.asarray(y, dtype=float)
    levels = (np.arange(1, size + 1) - 0.5) / size
    q = np.quantile(y, levels, method="inverted_cdf")
    return ThresholdGrid(np.unique(q))


def discretize_targets(y, grid: ThresholdGrid) -> np.ndarray:
    """Class ``#{j : y > alpha_j}`` of each response."""
    return np.searchsorted(grid.alphas, np.asarray(y, dtype=float), side="left").astype(np.int64)


# --------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True)
def _splitmix(x):
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@numba.njit(cache=True)
def _randint(key, node, draw, n):
    h = _splitmix(_splitmix(key ^ np.uint64(node)) + np.uint64(draw))
    u = np.float64(h >> np.uint64(11)) * (1.0 / 9007199254740992.0)
    r = np.int64(u * n)
    return r if r < n else n - 1


@numba.njit(cache=True, nogil=True)
def _build_tree(X, c, w, n_classes, max_depth, min_leaf, mtry, key):
    n, d = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    node_total = np.zeros(cap)
    leaf_start = np.zeros(cap, np.int64)
    leaf_len = np.zeros(cap, np.int64)
    leaf_cls = np.zeros(n, np.int64)
    leaf_w = np.zeros(n)

    idx = np.arange(n)
    buf = np.empty(n, np.int64)
    vals = np.empty(n)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_node = np.empty(cap, np.int64)
    counts = np.zeros(n_classes)
    lcounts = np.zeros(n_classes)
    feats = np.arange(d)

    sp = 0
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    st_node[0] = 0
    sp = 1
    n_nodes = 1
    n_entries = 0

    while sp > 0:
        sp -= 1
        s = st_start[sp]
        e = st_end[sp]
        depth = st_depth[sp]
        node = st_node[sp]

        counts[:] = 0.0
        W = 0.0
        for i in range(s, e):
            r = idx[i]
            counts[c[r]] += w[r]
            W += w[r]
        node_total[node] = W
        nonzero = 0
        sumsq = 0.0
        for j in range(n_classes):
            if counts[j] > 0:
                nonzero += 1
                sumsq += counts[j] * counts[j]

        best_f = -1
        best_thr = 0.0
        is_leaf = (max_depth >= 0 and depth >= max_depth) or W < 2 * min_leaf or nonzero <= 1
        if not is_leaf:
            for j in range(d):
                feats[j] = j
            for j in range(mtry):
                r = j + _randint(key, node, j, d - j)
                tmp = feats[j]
                feats[j] = feats[r]
                feats[r] = tmp
            chosen = np.sort(feats[:mtry])
            best_score = -np.inf
            m = e - s
            for fi in range(mtry):
                f = chosen[fi]
                for i in range(m):
                    vals[i] = X[idx[s + i], f]
                order = np.argsort(vals[:m], kind="mergesort")
                lcounts[:] = 0.0
                WL = 0.0
                sumsq_l = 0.0
                sumsq_r = sumsq
                for p in range(m - 1):
                    r = idx[s + order[p]]
                    cl = c[r]
                    wi = w[r]
                    a = lcounts[cl]
                    b = counts[cl] - a
                    sumsq_l += 2.0 * a * wi + wi * wi
                    sumsq_r += -2.0 * b * wi + wi * wi
                    lcounts[cl] = a + wi
                    WL += wi
                    v0 = vals[order[p]]
                    v1 = vals[order[p + 1]]
                    if v1 > v0:
                        WR = W - WL
                        if WL >= min_leaf and WR >= min_leaf:
                            score = sumsq_l / WL + sumsq_r / WR
                            if score > best_score:
                                best_score = score
                                best_f = f
                                thr = 0.5 * (v0 + v1)
                                if thr >= v1:
                                    thr = v0
                                best_thr = thr
            if best_f < 0:
                is_leaf = True

        if is_leaf:
            leaf_start[node] = n_entries
            for j in range(n_classes):
                if counts[j] > 0:
                    leaf_cls[n_entries] = j
                    leaf_w[n_entries] = counts[j]
                    n_entries += 1
            leaf_len[node] = n_entries - leaf_start[node]
        else:
            nl = 0
            for i in range(s, e):
                r = idx[i]
                if X[r, best_f] <= best_thr:
                    buf[nl] = r
                    nl += 1
            nr = nl
            for i in range(s, e):
                r = idx[i]
                if not X[r, best_f] <= best_thr:
                    buf[nr] = r
                    nr += 1
            for i in range(e - s):
                idx[s + i] = buf[i]
            feature[node] = best_f
            threshold[node] = best_thr
            left[node] = n_nodes
            right[node] = n_nodes + 1
            # right pushed first so the left subtree is built first
            st_start[sp] = s + nl
            st_end[sp] = e
            st_depth[sp] = depth + 1
            st_node[sp] = n_nodes + 1
            sp += 1
            st_start[sp] = s
            st_end[sp] = s + nl
            st_depth[sp] = depth + 1
            st_node[sp] = n_nodes
            sp += 1
            n_nodes += 2

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), node_total[:n_nodes].copy(), leaf_start[:n_nodes].copy(),
            leaf_len[:n_nodes].copy(), leaf_cls[:n_entries].copy(), leaf_w[:n_entries].copy())


@numba.njit(cache=True, nogil=True)
def _apply(X, feature, threshold, left, right, node_off, t):
    out = np.empty(X.shape[0], np.int64)
    base = node_off[t]
    for i in range(X.shape[0]):
        node = 0
        while feature[base + node] >= 0:
            if X[i, feature[base + node]] <= threshold[base + node]:
                node = left[base + node]
            else:
                node = right[base + node]
        out[i] = node
    return out


@numba.njit(cache=True, nogil=True)
def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


@numba.njit(cache=True, nogil=True)
def _two_prod(a, b):
    # Dekker's splitting; exact for finite a, b away from overflow
    p = a * b
    c = 134217729.0 * a
    ah = c - (c - a)
    al = a - ah
    c = 134217729.0 * b
    bh = c - (c - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


@numba.njit(cache=True, nogil=True)
def _dd_div(hi, lo, n):
    """``(hi + lo) / n`` to about 106 bits, rounded to a double."""
    q = hi / n
    p, e = _two_prod(q, n)
    r = ((hi - p) - e) + lo
    return q + r / n


@numba.njit(cache=True, nogil=True)
def _predict(X, feature, threshold, left, right, node_total, leaf_start, leaf_len,
             leaf_cls, leaf_w, node_off, leaf_off, n_classes):
    # tree votes are summed in double-double and divided once, so the mean
    # is (nearly) correctly rounded: trees that agree reproduce their value
    n_trees = node_off.shape[0] - 1
    out = np.zeros((X.shape[0], n_classes))
    lo = np.zeros(n_classes)
    for i in range(X.shape[0]):
        lo[:] = 0.0
        for t in range(n_trees):
            base = node_off[t]
            node = 0
            while feature[base + node] >= 0:
                if X[i, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            g = base + node
            tot = node_total[g]
            ls = leaf_off[t] + leaf_start[g]
            for q in range(leaf_len[g]):
                j = leaf_cls[ls + q]
                out[i, j], e = _two_sum(out[i, j], leaf_w[ls + q] / tot)
                lo[j] += e
        for j in range(n_classes):
            out[i, j] = _dd_div(out[i, j], lo[j], float(n_trees))
    return out


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 200
    max_depth: Optional[int] = None
    min_leaf: int = 5
    mtry: Optional[int] = None
    bootstrap: bool = True

    def resolved_mtry(self, d: int) -> int:
        m = math.ceil(math.sqrt(d)) if self.mtry is None else int(self.mtry)
        return max(1, min(d, m))

    def to_dict(self) -> dict:
        return {"n_trees": self.n_trees, "max_depth": self.max_depth, "min_leaf": self.min_leaf,
                "mtry": self.mtry, "bootstrap": self.bootstrap}


_ARRAYS = ("feature", "threshold", "left", "right", "node_total", "leaf_start", "leaf_len",
           "leaf_cls", "leaf_w", "node_off", "leaf_off")


@dataclass(frozen=True, eq=False)
class Forest:
    """A trained forest; all trees are packed into flat arrays.

    Tree ``t`` owns nodes ``node_off[t]:node_off[t+1]`` and leaf entries
    ``leaf_off[t]:leaf_off[t+1]``. Node indices inside a tree are local.
    A leaf stores the bootstrap-weighted class counts of the samples that
    reached it; its frequency vector is ``counts / node_total``.
    """

    n_features: int
    n_classes: int
    params: ForestParams
    seed: int
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    node_total: np.ndarray
    leaf_start: np.ndarray
    leaf_len: np.ndarray
    leaf_cls: np.ndarray
    leaf_w: np.ndarray
    node_off: np.ndarray
    leaf_off: np.ndarray
    workers: int = field(default=1, compare=False)

    def __post_init__(self):
        for name in _ARRAYS:
            getattr(self, name).setflags(write=False)

    @property
    def n_trees(self) -> int:
        return self.node_off.shape[0] - 1

    @property
    def n_nodes(self) -> int:
        return int(self.node_off[-1])

    def _kernel_args(self):
        return tuple(getattr(self, name) for name in _ARRAYS[:9]) + (self.node_off, self.leaf_off)

    def predict_proba(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"forest expects {self.n_features} features, got {X.shape[1]}")
        a = self._kernel_args()
        chunks = np.array_split(np.arange(X.shape[0]), max(1, min(self.workers, X.shape[0])))

        def run(rows):
            return _predict(X[rows], a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8],
                            a[9], a[10], self.n_classes)

        if self.workers > 1 and X.shape[0] > 1:
            with ThreadPoolExecutor(self.workers) as ex:
                parts = list(ex.map(run, chunks))
        else:
            parts = [run(rows) for rows in chunks]
        return np.concatenate(parts, axis=0)

    def apply(self, X, t: int) -> np.ndarray:
        """Local leaf index reached by each row in tree ``t``."""
        X = np.ascontiguousarray(X, dtype=float)
        return _apply(X, self.feature, self.threshold, self.left, self.right, self.node_off, t)

    def leaf_frequencies(self, t: int, node: int) -> np.ndarray:
        g = self.node_off[t] + node
        if self.feature[g] >= 0:
            raise ValueError("not a leaf")
        v = np.zeros(self.n_classes)
        ls = self.leaf_off[t] + self.leaf_start[g]
        for q in range(self.leaf_len[g]):
            v[self.leaf_cls[ls + q]] += self.leaf_w[ls + q] / self.node_total[g]
        return v

    # serialization ----------------------------------------------------------

    def to_bytes(self, **extra) -> bytes:
        """npz archive of the packed arrays; ``extra`` entries join the JSON metadata."""
        meta = {**extra,
            "format": FOREST_FORMAT,
            "version": FOREST_VERSION,
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "seed": self.seed,
            "params": self.params.to_dict(),
        }
        buf = io.BytesIO()
        np.savez_compressed(buf, meta=np.array(json.dumps(meta, sort_keys=True)),
                            **{name: getattr(self, name) for name in _ARRAYS})
        return buf.getvalue()

    def save(self, path, **extra) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes(**extra))

    @classmethod
    def from_bytes(cls, data: bytes, workers: int = 1) -> "Forest":
        with np.load(io.BytesIO(data), allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("format") != FOREST_FORMAT:
                raise ValueError("not a forest model file")
            if meta.get("version") != FOREST_VERSION:
                raise ValueError(f"unsupported forest model version {meta.get('version')}")
            arrays = {name: z[name].copy() for name in _ARRAYS}
        return cls(meta["n_features"], meta["n_classes"], ForestParams(**meta["params"]),
                   meta["seed"], workers=workers, **arrays)

    @classmethod
    def load(cls, path, workers: int = 1) -> "Forest":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), workers)


def canonical_order(X, c) -> np.ndarray:
    """Row permutation sorting by (x_0, x_1, ..., class); independent of input order."""
    keys = (c,) + tuple(X[:, j] for j in range(X.shape[1] - 1, -1, -1))
    return np.lexsort(keys)


def _tree_key(seed: int, t: int):
    ss = np.random.SeedSequence([int(seed), int(t)])
    return ss, np.uint64(ss.generate_state(1, np.uint64)[0])


def bootstrap_counts(m: int, seed: int, t: int, bootstrap: bool = True) -> np.ndarray:
    """Multiplicity of each canonically ordered row in the sample for tree ``t``."""
    if not bootstrap:
        return np.ones(m, dtype=np.int64)
    ss, _ = _tree_key(seed, t)
    rng = np.random.Generator(np.random.Philox(ss))
    draws = rng.integers(0, m, size=m)
    return np.bincount(draws, minlength=m)


def _validate_training(X, c, n_classes):
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    c = np.asarray(c)
    if X.shape[0] == 0:
        raise EmptyTraining("no training samples")
    if X.shape[0] < 2:
        raise EmptyTraining("need at least 2 training samples")
    if c.shape != (X.shape[0],):
        raise DimensionMismatch("class vector length differs from row count")
    if not np.all(np.isfinite(X)):
        raise ValueError("training covariates must be finite")
    if c.dtype.kind not in "iu":
        if not np.all(c == np.round(c)):
            raise ClassOutOfRange("class labels must be integers")
    c = c.astype(np.int64)
    if n_classes is None:
        n_classes = int(c.max()) + 1
    if c.min() < 0 or c.max() >= n_classes:
        raise ClassOutOfRange(f"class labels must lie in 0..{n_classes - 1}")
    return X, c, int(n_classes)


def fit_forest(X, c, params: ForestParams = ForestParams(), seed: int = 0,
               n_classes: Optional[int] = None, workers: int = 1) -> Forest:
    """Train a random forest of Gini trees with soft-voting leaves.

    Each tree sees a bootstrap resample of the rows (same size, with
    replacement); at each node ``mtry`` features are drawn without
    replacement and the split maximizing the Gini impurity decrease over
    midpoints of consecutive distinct values is taken, ties going to the
    lowest (feature, threshold). A node becomes a leaf at ``max_depth``,
    when it is pure, or when no split leaves ``min_leaf`` samples on both
    sides.
    """
    X, c, n_classes = _validate_training(X, c, n_classes)
    if params.n_trees < 1:
        raise ValueError("need at least one tree")
    if params.min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    order = canonical_order(X, c)
    Xs = np.ascontiguousarray(X[order])
    cs = np.ascontiguousarray(c[order])
    m, d = Xs.shape
    mtry = params.resolved_mtry(d)
    max_depth = -1 if params.max_depth is None else int(params.max_depth)

    def train(t):
        counts = bootstrap_counts(m, seed, t, params.bootstrap)
        rows = np.flatnonzero(counts)
        _, key = _tree_key(seed, t)
        return _build_tree(np.ascontiguousarray(Xs[rows]), cs[rows], counts[rows].astype(float),
                           n_classes, max_depth, params.min_leaf, mtry, key)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            trees = list(ex.map(train, range(params.n_trees)))
    else:
        trees = [train(t) for t in range(params.n_trees)]

    node_off = np.zeros(len(trees) + 1, np.int64)
    leaf_off = np.zeros(len(trees) + 1, np.int64)
    for t, tr in enumerate(trees):
        node_off[t + 1] = node_off[t] + tr[0].shape[0]
        leaf_off[t + 1] = leaf_off[t] + tr[7].shape[0]
    packed = [np.concatenate([tr[i] for tr in trees]) for i in range(9)]
    return Forest(d, n_classes, params, int(seed), *packed, node_off, leaf_off, workers=workers)


def predict_class_probs(f: Forest, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != f.n_features:
        raise DimensionMismatch(f"forest expects {f.n_features} features, got {x.shape[0]}")
    return f.predict_proba(x.reshape(1, -1))[0]


def oob_class_probs(f: Forest, X, c) -> np.ndarray:
    """Out-of-bag class probabilities for the forest's own training data.

    ``X`` and ``c`` must be the training data (any row order). Rows that
    were in-bag for every tree get NaN.
    """
    X, c, _ = _validate_training(X, c, f.n_classes)
    order = canonical_order(X, c)
    Xs = X[order]
    m = Xs.shape[0]
    acc = np.zeros((m, f.n_classes))
    hits = np.zeros(m)
    for t in range(f.n_trees):
        out = bootstrap_counts(m, f.seed, t, f.params.bootstrap) == 0
        if not out.any():
            continue
        rows = np.flatnonzero(out)
        leaves = f.apply(Xs[rows], t)
        for r, node in zip(rows, leaves):
            acc[r] += f.leaf_frequencies(t, node)
        hits[rows] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = acc / hits[:, None]
    probs[hits == 0] = np.nan
    res = np.empty_like(probs)
    res[order] = probs
    return res


def mixture_from_class_probs(p, grid: ThresholdGrid, sigma: float) -> MixtureDistribution:
    """Mass ``p_{j-1}`` at ``alpha_j``; the top-class mass becomes the deficit."""
    p = np.asarray(p, dtype=float)
    if p.shape != (grid.n_classes,):
        raise DimensionMismatch(f"expected {grid.n_classes} class probabilities, got {p.shape}")
    p = np.clip(p, 0.0, 1.0)
    return MixtureDistribution(grid.alphas, p[:-1], sigma, deficit=float(p[-1]))


def forest_conditional_cdf(f: Forest, grid: ThresholdGrid, x, sigma: float = 0.0) -> MixtureDistribution:
    if f.n_classes != grid.n_classes:
        raise DimensionMismatch("forest and threshold grid disagree on the number of classes")
    return mixture_from_class_probs(predict_class_probs(f, x), grid, sigma)
