import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from condsurrogate.datamodel import Dataset, Origin
from condsurrogate.errors import DegenerateColumn, DimensionMismatch, NotPositiveDefinite, TooFewPoints
from condsurrogate.metric import (
    MetricKind,
    Standardizer,
    Whitener,
    apply_standardizer,
    default_ridge,
    distance,
    fit_standardizer,
    fit_whitener,
)


def sim(X, y=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return Dataset(tuple(f"x{j}" for j in range(X.shape[1])), X, y, Origin.SIMULATED)


def test_standardizer_examples():
    s = fit_standardizer(sim([1, 2, 3]))
    assert s.means[0] == 2.0 and s.stds[0] == 1.0
    s = fit_standardizer(sim([0, 0, 3, 3]))
    assert s.means[0] == 1.5
    assert s.stds[0] == pytest.approx(math.sqrt(3), rel=1e-15)


def test_constant_column_is_degenerate():
    with pytest.raises(DegenerateColumn) as exc:
        fit_standardizer(sim(np.column_stack([[1, 2, 3], [5, 5, 5]])))
    assert exc.value.col == 1


def test_standardizer_needs_simulations():
    ds = Dataset(("a",), np.array([[1.0], [2.0]]), origin=Origin.MEASURED)
    with pytest.raises(ValueError):
        fit_standardizer(ds)
    with pytest.raises(TooFewPoints):
        fit_standardizer(sim([1.0]))


def test_apply_standardizer_examples():
    meas = Dataset(("x0",), np.array([[2.0]]), origin=Origin.MEASURED)
    assert apply_standardizer(Standardizer([2.0], [1.0]), meas).X[0, 0] == 0.0
    meas = Dataset(("x0",), np.array([[4.0]]), origin=Origin.MEASURED)
    assert apply_standardizer(Standardizer([0.0], [2.0]), meas).X[0, 0] == 2.0
    s = fit_standardizer(sim([1.0, 4.0, 7.0]))
    meas = Dataset(("x0",), np.array([[4.0]]), origin=Origin.MEASURED)
    assert apply_standardizer(s, meas).X[0, 0] == 0.0
    with pytest.raises(DimensionMismatch):
        s.transform(np.zeros((1, 2)))


def test_euclidean_whitener_is_identity():
    w = fit_whitener(np.random.default_rng(0).normal(size=(5, 3)), MetricKind.EUCLIDEAN)
    np.testing.assert_array_equal(w.factor, np.eye(3))


def diag_cov_data(a, b):
    # four points whose sample covariance is diag(a^2, b^2)
    return np.array([[a, 0], [-a, 0], [0, b], [0, -b]]) * math.sqrt(1.5)


def test_whitener_diagonal_cholesky():
    X = diag_cov_data(2.0, 1.0)
    np.testing.assert_allclose(np.cov(X, rowvar=False), np.diag([4.0, 1.0]), atol=1e-14)
    w = fit_whitener(X, ridge=0.0)
    np.testing.assert_allclose(w.factor, np.diag([2.0, 1.0]), atol=1e-14)
    assert distance(w, [0, 0], [2, 0]) == pytest.approx(1.0, rel=1e-14)


def test_collinear_columns_not_positive_definite():
    x = np.arange(6.0)
    with pytest.raises(NotPositiveDefinite):
        fit_whitener(np.column_stack([x, 2 * x]), ridge=0.0)
    # the default ridge rescues the same data
    fit_whitener(np.column_stack([x, 2 * x]))


def test_mahalanobis_needs_d_plus_one_rows():
    with pytest.raises(TooFewPoints):
        fit_whitener(np.eye(3))


def test_default_ridge():
    assert default_ridge(np.diag([1.0, 3.0])) == pytest.approx(2e-9)


def test_distance_examples():
    w = Whitener(MetricKind.EUCLIDEAN, np.eye(2))
    assert distance(w, [0, 0], [3, 4]) == 5.0
    assert distance(w, [1.5, -2], [1.5, -2]) == 0.0
    with pytest.raises(DimensionMismatch):
        distance(w, [0, 0, 0], [1, 1, 1])


def test_whitener_serialization():
    w = fit_whitener(np.random.default_rng(1).normal(size=(20, 3)))
    w2 = Whitener.from_dict(w.to_dict())
    assert w2.factor.tobytes() == w.factor.tobytes() and w2.ridge == w.ridge


def random_whitener(rng, d):
    A = rng.normal(size=(d, d))
    cov = A @ A.T + 0.1 * np.eye(d)
    return Whitener(MetricKind.MAHALANOBIS, np.linalg.cholesky(cov)), cov


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6))
def test_metric_axioms(seed, d):
    rng = np.random.default_rng(seed)
    w, _ = random_whitener(rng, d)
    x, y, z = rng.normal(size=(3, d))
    assert distance(w, x, y) == distance(w, y, x) or math.isclose(
        distance(w, x, y), distance(w, y, x), rel_tol=1e-15)
    assert distance(w, x, x) == 0.0
    assert distance(w, x, y) > 0
    assert distance(w, x, z) <= (distance(w, x, y) + distance(w, y, z)) * (1 + 1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6))
def test_whitened_space_equivalence(seed, d):
    rng = np.random.default_rng(seed)
    w, cov = random_whitener(rng, d)
    x, y = rng.normal(size=(2, d))
    direct = math.sqrt((x - y) @ np.linalg.solve(cov, x - y))
    assert distance(w, x, y) == pytest.approx(direct, rel=1e-10)
    wx, wy = w.whiten(np.stack([x, y]))
    assert distance(w, x, y) == pytest.approx(float(np.linalg.norm(wx - wy)), rel=1e-10)


def conditioned(rng, d):
    # random rotation times singular values in [0.3, 3]: condition number <= 10
    Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    return Q * rng.uniform(0.3, 3.0, size=d)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5))
def test_affine_invariance(seed, d):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(50, d)) @ conditioned(rng, d) + rng.normal(size=d)
    A = conditioned(rng, d)
    b = rng.normal(size=d)
    w1 = fit_whitener(X, ridge=0.0)
    Z = X @ A.T + b
    w2 = fit_whitener(Z, ridge=0.0)
    for i, j in [(0, 1), (2, 7), (10, 49)]:
        assert distance(w2, Z[i], Z[j]) == pytest.approx(distance(w1, X[i], X[j]), rel=1e-8)
