import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from condsurrogate.datamodel import Dataset
from condsurrogate.errors import EmptyList, LevelBeyondDeficit, MixedBandwidth, NonPositiveInput, OutOfDomain
from condsurrogate.knn import fit_knn, knn_conditionals
from condsurrogate.metric import MetricKind, fit_whitener
from condsurrogate.mixture import MixtureDistribution
from condsurrogate.surrogate import (
    SurrogateDistribution,
    aggregate,
    aggregate_class_probs,
    aggregate_neighbor_responses,
    cdf,
    empirical_distribution,
    gumbel_curve,
    gumbel_transform,
    moments,
    pooled_std,
    quantile,
    regression_imputation_baseline,
    silverman_bandwidth,
)


def dirac(*points, sigma=0.0):
    return MixtureDistribution(points, [1.0 / len(points)] * len(points), sigma)


# aggregation -----------------------------------------------------------------


def test_aggregate_examples():
    assert cdf(aggregate([dirac(0.0), dirac(1.0)]), 0.5) == 0.5
    m = MixtureDistribution([0.0, 1.0, 4.0], [0.2, 0.5, 0.3], 0.4)
    agg = aggregate([m] * 7)
    assert agg.means.tolist() == m.means.tolist()
    np.testing.assert_allclose(agg.weights, m.weights, rtol=1e-15)
    assert agg.n_conditionals == 7
    a = MixtureDistribution([0.0], [1.0])
    b = MixtureDistribution([0.0], [0.9], deficit=0.1)
    assert aggregate([a, b]).deficit == pytest.approx(0.05, abs=1e-17)


def test_aggregate_errors():
    with pytest.raises(EmptyList):
        aggregate([])
    with pytest.raises(MixedBandwidth):
        aggregate([dirac(0.0, sigma=1.0), dirac(1.0, sigma=2.0)])


def test_neighbor_matrix_matches_list_aggregation():
    r = np.round(np.random.default_rng(0).normal(size=(40, 10)), 1)
    direct = aggregate_neighbor_responses(r, 0.3)
    via_list = aggregate([MixtureDistribution(row, np.full(10, 0.1), 0.3) for row in r])
    assert direct.means.tolist() == via_list.means.tolist()
    np.testing.assert_allclose(direct.weights, via_list.weights, rtol=1e-13)


def test_class_prob_aggregation_carries_deficit():
    p = np.array([[0.2, 0.3, 0.5], [0.4, 0.6, 0.0]])
    s = aggregate_class_probs(p, [1.0, 2.0], 0.0)
    assert s.deficit == 0.25 and s.ceiling == 0.75
    assert s.cdf(1.0) == pytest.approx(0.3) and s.cdf(2.0) == pytest.approx(0.75)


# cdf / quantile / moments ------------------------------------------------------


def test_cdf_examples():
    assert cdf(dirac(0.0), 0.0) == 1.0
    assert cdf(dirac(0.0), -1e-300) == 0.0
    assert cdf(dirac(1.0, 3.0), 2.0) == 0.5
    assert cdf(dirac(0.0, sigma=1.0), 1.0) == pytest.approx(stats.norm.cdf(1.0), rel=1e-14)
    assert cdf(dirac(0.0, sigma=1.0), 1.0) == pytest.approx(0.8413447, abs=1e-7)


def test_quantile_examples():
    d = dirac(1.0, 2.0, 3.0, 4.0)
    assert quantile(d, 0.5) == 2.0
    assert quantile(d, 0.9) == 4.0
    assert quantile(d, 0.25) == 1.0 and quantile(d, 0.2500001) == 2.0
    short = MixtureDistribution([0.0, 1.0], [0.3, 0.4], deficit=0.3)
    with pytest.raises(LevelBeyondDeficit):
        quantile(short, 0.8)
    assert quantile(short, 0.7) == 1.0


def test_smoothed_quantile_matches_normal():
    d = dirac(0.0, sigma=1.0)
    for a in [0.01, 0.25, 0.5, 0.975]:
        assert quantile(d, a) == pytest.approx(stats.norm.ppf(a), abs=2e-10)


def test_moments_examples():
    assert moments(dirac(0.0)) == (0.0, 0.0)
    assert moments(dirac(0.0, 2.0)) == (1.0, 1.0)
    assert moments(MixtureDistribution([3.0], [1.0], 2.0)) == (3.0, 4.0)
    # the deficit is excluded from the moments
    assert moments(MixtureDistribution([1.0, 3.0], [0.25, 0.25], deficit=0.5)) == (2.0, 1.0)


def random_mixture(rng, sigma):
    n = int(rng.integers(1, 12))
    w = rng.dirichlet(np.ones(n))
    return MixtureDistribution(rng.normal(size=n) * 3, w / math.fsum(w), sigma)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([0.0, 0.05, 0.7]))
def test_law_of_total_variance(seed, sigma):
    rng = np.random.default_rng(seed)
    conds = [random_mixture(rng, sigma) for _ in range(int(rng.integers(1, 30)))]
    means = np.array([c.moments()[0] for c in conds])
    variances = np.array([c.moments()[1] for c in conds])
    want = variances.mean() + means.var()
    got = aggregate(conds).moments()[1]
    assert got == pytest.approx(want, rel=1e-9, abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([0.0, 0.01, 0.5]))
def test_galois_inequalities(seed, sigma):
    rng = np.random.default_rng(seed)
    d = aggregate([random_mixture(rng, sigma) for _ in range(5)])
    tol = 0.0 if sigma == 0 else 1e-10
    ts = np.concatenate([d.means, rng.normal(size=20) * 4])
    F = d.cdf(ts)
    assert np.all(np.diff(d.cdf(np.sort(ts))) >= 0)
    assert np.all(F <= d.ceiling + 1e-15)
    for t, f in zip(ts, F):
        if 0 < f < 1:
            assert d.quantile(f) <= t + tol
    for a in rng.uniform(0.001, 0.999, size=20):
        assert d.cdf(d.quantile(a)) >= a


def test_large_staircase_has_no_drift():
    rng = np.random.default_rng(1)
    n = 10 ** 6
    counts = rng.integers(1, 1000, size=n)
    total = int(counts.sum())
    exact = np.cumsum(counts) / total  # integer prefix sums, one rounding each
    d = MixtureDistribution(np.arange(n, dtype=float), counts / total)
    err = np.max(np.abs(d.cdf(np.arange(n, dtype=float)) - exact))
    assert err <= 1e-12, err


def test_cdf_monotone_for_large_smoothed_mixture():
    rng = np.random.default_rng(2)
    n = 20000
    d = MixtureDistribution(np.sort(rng.normal(size=n)), np.full(n, 1.0 / n), 0.01)
    F = d.cdf(np.linspace(-5, 5, 100001))
    assert np.all(np.diff(F) >= 0)
    assert F[0] == pytest.approx(0.0, abs=1e-12) and F[-1] == pytest.approx(1.0, abs=1e-12)


# gumbel / silverman --------------------------------------------------------------


def test_gumbel_examples():
    assert gumbel_transform(math.exp(-1.0)) == 0.0
    assert gumbel_transform(math.exp(-math.e)) == pytest.approx(-1.0, abs=1e-15)
    for bad in (0.0, 1.0, -0.5, 2.0, float("nan")):
        with pytest.raises(OutOfDomain):
            gumbel_transform(bad)


def test_gumbel_strictly_increasing():
    p = np.linspace(1e-6, 1 - 1e-6, 100001)
    assert np.all(np.diff(gumbel_transform(p)) > 0)


def test_gumbel_curve_clips_and_marks():
    g, clipped = gumbel_curve(np.array([0.0, 0.5, 1.0]))
    assert clipped.tolist() == [True, False, True]
    assert np.all(np.isfinite(g))
    assert g[0] == gumbel_transform(1e-12)


def test_silverman_closed_form():
    with mpmath.workdps(50):
        want = float(mpmath.mpf("1.06") * mpmath.power(183990, mpmath.mpf(-1) / 5))
    assert silverman_bandwidth(10, 18399, 1.0) == pytest.approx(want, rel=1e-12)
    assert silverman_bandwidth(10, 18399, 1.0) == pytest.approx(0.0938, abs=5e-5)
    assert silverman_bandwidth(10, 18399, 2.0) == 2 * silverman_bandwidth(10, 18399, 1.0)


def test_silverman_degenerate_and_errors():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert silverman_bandwidth(10, 100, 0.0) == 0.0
    assert any(issubclass(w.category, RuntimeWarning) for w in caught)
    for args in [(0, 10, 1.0), (10, 0, 1.0), (10, 10, -1.0), (-1, 10, 1.0)]:
        with pytest.raises(NonPositiveInput):
            silverman_bandwidth(*args)


def test_pooled_std_uses_all_responses():
    r = np.arange(20.0).reshape(4, 5)
    assert pooled_std(r) == pytest.approx(np.std(np.arange(20.0), ddof=1))


# baseline ---------------------------------------------------------------------------


def test_baseline_examples():
    w = fit_whitener(np.zeros((1, 1)), MetricKind.EUCLIDEAN)
    sim = Dataset(("x",), np.array([[0.0], [1.0]]), np.array([0.0, 10.0]))
    base = regression_imputation_baseline(np.array([[0.0], [1.0]]), fit_knn(sim, w, k=2))
    assert base.means.tolist() == [5.0] and base.moments() == (5.0, 0.0)
    sim = Dataset(("x",), np.array([[0.0], [1.0], [2.0]]), np.array([3.0, -1.0, 7.0]))
    base = regression_imputation_baseline(np.array([[0.0], [2.0], [2.0]]), fit_knn(sim, w, k=1))
    emp = empirical_distribution([3.0, 7.0, 7.0])
    assert base.means.tolist() == emp.means.tolist()
    np.testing.assert_allclose(base.weights, emp.weights, rtol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_baseline_variance_never_exceeds_surrogate(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(200, 2))
    y = X[:, 0] + rng.normal(size=200) * rng.uniform(0, 2)
    model = fit_knn(Dataset(("a", "b"), X, y), fit_whitener(X), k=int(rng.integers(1, 15)))
    Q = rng.normal(size=(50, 2))
    base = regression_imputation_baseline(Q, model)
    full = aggregate(knn_conditionals(model, Q))
    assert base.moments()[1] <= full.moments()[1] * (1 + 1e-12) + 1e-15


def test_baseline_equals_surrogate_when_neighborhoods_constant():
    X = np.repeat(np.arange(10.0), 3).reshape(-1, 1)
    y = np.repeat(np.arange(10.0) ** 2, 3)
    w = fit_whitener(np.zeros((1, 1)), MetricKind.EUCLIDEAN)
    model = fit_knn(Dataset(("x",), X, y), w, k=3)
    Q = np.arange(10.0).reshape(-1, 1)
    base = regression_imputation_baseline(Q, model)
    full = aggregate(knn_conditionals(model, Q))
    assert base.moments()[1] == pytest.approx(full.moments()[1], rel=1e-14)


def test_surrogate_weight_tolerance():
    with pytest.raises(ValueError):
        SurrogateDistribution([0.0, 1.0], [0.5, 0.4])
    SurrogateDistribution([0.0, 1.0], [0.5, 0.5 - 1e-10])
