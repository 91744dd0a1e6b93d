import math

import numpy as np
import pytest
from scipy import optimize, stats

from condsurrogate.errors import EmptyGrid
from condsurrogate.io import serialize_dataset
from condsurrogate.surrogate import empirical_distribution
from condsurrogate.synthbench import (
    DEFAULT_MIXTURE,
    GUMBEL_VARIANCE,
    default_model,
    degenerate_model,
    empirical_cdf_function,
    empirical_quantile,
    ks_distance,
    noisy_model,
    symmetric_model,
)


def test_generation_is_deterministic_to_the_byte():
    a = default_model(seed=5).generate(300, 1000)
    b = default_model(seed=5).generate(300, 1000)
    assert serialize_dataset(a[0]) == serialize_dataset(b[0])
    assert serialize_dataset(a[2]) == serialize_dataset(b[2])
    assert a[1].tobytes() == b[1].tobytes()
    c = default_model(seed=6).generate(300, 1000)
    assert serialize_dataset(c[2]) != serialize_dataset(a[2])


def test_sizes_must_be_positive():
    with pytest.raises(ValueError):
        default_model().generate(0, 10)
    with pytest.raises(ValueError):
        default_model().generate(10, 0)


def test_measured_data_carries_no_responses():
    meas, ym, sim, planted = default_model().generate(50, 60)
    assert meas.y is None and ym.shape == (50,)
    assert sim.y.shape == (60,) and not planted.any()


def test_simulated_covariance_matches_uniform_box():
    _, _, sim, _ = default_model(seed=1).generate(1, 10 ** 4)
    cov = np.cov(sim.X, rowvar=False)
    analytic = np.eye(4) / 3.0  # variance of U(-1, 1)
    assert np.all(np.abs(np.diag(cov) - 1 / 3) <= 0.1 / 3)
    assert np.max(np.abs(cov - analytic)) <= 0.1 / 3


def test_support_containment():
    meas, _, sim, _ = default_model(seed=2).generate(5000, 5000)
    assert np.all(np.abs(meas.X) <= 0.8)
    assert np.all(np.abs(sim.X) <= 1.0)
    assert DEFAULT_MIXTURE.high < 1.0


def test_contamination_plants_points_outside_the_box():
    model = default_model(seed=3, contamination=0.05, contamination_offset=5.0)
    meas, _, _, planted = model.generate(2000, 10)
    assert planted.sum() == 100
    edge = 1.0 + 5.0 * 2 / math.sqrt(12)
    assert np.all(np.max(np.abs(meas.X[planted]), axis=1) == pytest.approx(edge))
    assert np.all(np.abs(meas.X[~planted]) <= 0.8)


def test_true_cdf_examples():
    F, se = default_model().true_cdf(-100.0, n_mc=10 ** 4)
    assert F == 0.0
    F, se = symmetric_model(seed=4).true_cdf(0.0, n_mc=10 ** 5)
    assert abs(F - 0.5) <= 3 * se and se <= 0.5 / math.sqrt(10 ** 5)
    m = degenerate_model(c=1.5)
    F, _ = m.true_cdf(np.array([1.5 - 1e-12, 1.5, 2.0]), n_mc=10 ** 4)
    assert F.tolist() == [0.0, 1.0, 1.0]
    with pytest.raises(ValueError):
        m.true_cdf(0.0, n_mc=100)


def test_ks_examples():
    grid = np.linspace(-1, 2, 1001)
    f = empirical_cdf_function([0.3, 1.2])
    assert ks_distance(f, f, grid) == 0.0
    assert ks_distance(empirical_distribution([0.0]).cdf, empirical_distribution([1.0]).cdf, grid) == 1.0
    with pytest.raises(EmptyGrid):
        ks_distance(f, f, [])


def test_ks_between_shifted_normals():
    res = optimize.minimize_scalar(lambda t: -(stats.norm.cdf(t) - stats.norm.cdf(t - 0.1)),
                                   bounds=(-1, 1), method="bounded", options={"xatol": 1e-12})
    grid = np.linspace(-6, 6, 12001)
    ks = ks_distance(stats.norm(0, 1).cdf, stats.norm(0.1, 1).cdf, grid)
    assert ks == pytest.approx(-res.fun, abs=1e-7)
    assert res.x == pytest.approx(0.05, abs=1e-6)
    assert ks == pytest.approx(0.0399, abs=5e-5)


def test_empirical_helpers():
    v = np.array([3.0, 1.0, 2.0, 2.0])
    F = empirical_cdf_function(v)
    assert F(np.array([0.9, 1.0, 2.0, 3.0])).tolist() == [0.0, 0.25, 0.75, 1.0]
    s = np.sort(v)
    assert empirical_quantile(s, 0.5) == 2.0 and empirical_quantile(s, 0.76) == 3.0
    emp = empirical_distribution(v)
    for a in [0.1, 0.25, 0.5, 0.75, 0.99]:
        assert emp.quantile(a) == empirical_quantile(s, a)


def test_conditional_law_is_shared():
    """Independent draws of the sampler both origins use, matched at fixed x."""
    model = default_model(seed=7)
    xs = np.random.default_rng(8).uniform(-0.8, 0.8, size=(20, 4))
    pvals = []
    for i, x in enumerate(xs):
        X = np.repeat(x[None, :], 10 ** 4, axis=0)
        a = model.sample_response(X, np.random.default_rng([i, 1]))
        b = model.sample_response(X, np.random.default_rng([i, 2]))
        pvals.append(stats.ks_2samp(a, b).pvalue)
        # and both match the analytic conditional law
        loc = model.cond_mean(x[None, :])[0]
        scale = model.cond_scale(x[None, :])[0]
        assert stats.kstest(a, stats.gumbel_r(loc, scale).cdf).pvalue > 1e-4
    # twenty looks at level 0.01 reject a true equality 18% of the time, so the
    # per-x level is Bonferroni-corrected and the p-values are also pooled
    assert min(pvals) > 0.01 / len(pvals), pvals
    assert stats.combine_pvalues(pvals, method="fisher").pvalue > 0.01


def test_variance_decomposition():
    for model in (default_model(seed=9), noisy_model(seed=9)):
        vd = model.variance_decomposition(n_mc=10 ** 6, seed=1)
        total = vd["mean_cond_var"] + vd["var_g"]
        # Monte-Carlo error of a variance estimate from 10^6 draws
        assert vd["var_y"] == pytest.approx(total, rel=0.01)
    assert GUMBEL_VARIANCE == pytest.approx(stats.gumbel_r.var(), rel=1e-14)


def test_noisy_model_meets_the_premise():
    vd = noisy_model().variance_decomposition(n_mc=10 ** 6, seed=2)
    assert vd["mean_cond_var"] >= 0.2 * vd["var_y"]
