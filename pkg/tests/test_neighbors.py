import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from condsurrogate.errors import DimensionMismatch, EmptyPointSet
from condsurrogate.neighbors import (
    Backend,
    NeighborIndex,
    avg_knn_distance,
    avg_knn_distances,
    build_index,
    query_knn,
)

BACKENDS = [Backend.BRUTE_FORCE, Backend.ACCELERATED]


def random_configuration(rng):
    """Point cloud plus queries; some clouds live on a coarse lattice to force ties."""
    p = int(rng.integers(1, 2001))
    d = int(rng.integers(1, 9))
    k = int(rng.integers(1, 26))
    kind = rng.integers(0, 3)
    if kind == 0:
        P = rng.normal(size=(p, d))
        Q = rng.normal(size=(40, d))
    elif kind == 1:
        P = rng.integers(-2, 3, size=(p, d)).astype(float)
        Q = rng.integers(-2, 3, size=(40, d)) + rng.choice([0.0, 0.5], size=(40, d))
    else:
        base = rng.normal(size=(max(1, p // 10), d))
        P = base[rng.integers(0, base.shape[0], size=p)]
        Q = np.vstack([base[:20], rng.normal(size=(20, d))])
    return P, Q, k


def oracle(P, q, k):
    """Plain-Python enumeration: sort (distance, index) pairs."""
    pairs = sorted((float(np.sqrt(sum((P[i, j] - q[j]) ** 2 for j in range(P.shape[1])))), i)
                   for i in range(P.shape[0]))
    return pairs[:k]


@pytest.mark.parametrize("backend", BACKENDS)
def test_one_dimensional_example(backend):
    idx = build_index(np.array([[0.0], [1.0], [10.0]]), backend)
    res = query_knn(idx, [0.4], 2)
    assert [i for i, _ in res] == [0, 1]
    assert res[0][1] == pytest.approx(0.4) and res[1][1] == pytest.approx(0.6)


@pytest.mark.parametrize("backend", BACKENDS)
def test_singleton_and_exhaustive(backend):
    idx = build_index([[3.0, 4.0]], backend)
    assert idx.p == 1
    assert query_knn(idx, [0.0, 0.0], 1) == [(0, 5.0)]
    P = np.random.default_rng(0).normal(size=(7, 2))
    res = query_knn(build_index(P, backend), [0.0, 0.0], 7)
    assert sorted(i for i, _ in res) == list(range(7))
    assert [d for _, d in res] == sorted(d for _, d in res)


@pytest.mark.parametrize("backend", BACKENDS)
def test_duplicates_break_ties_by_index(backend):
    P = np.array([[1.0, 1.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0], [-1.0, -1.0]])
    res = query_knn(build_index(P, backend), [0.5, 0.5], 5)
    assert [i for i, _ in res] == [0, 1, 2, 3, 4]


def test_empty_point_set():
    with pytest.raises(EmptyPointSet):
        build_index(np.empty((0, 2)))


@pytest.mark.parametrize("backend", BACKENDS)
def test_dimension_mismatch(backend):
    idx = build_index(np.zeros((3, 2)), backend)
    with pytest.raises(DimensionMismatch):
        query_knn(idx, [0.0, 0.0, 0.0], 1)


@pytest.mark.parametrize("backend", BACKENDS)
def test_average_distance_examples(backend):
    assert avg_knn_distance(build_index([[0.0], [2.0]], backend), [1.0], 2) == 1.0
    assert avg_knn_distance(build_index([[0.0], [1.0], [10.0]], backend), [0.0], 2) == 0.5
    assert avg_knn_distance(build_index([[0.0], [1.0], [10.0]], backend), [10.0], 1) == 0.0


def test_k_larger_than_p_truncates_with_counter():
    idx = build_index([[0.0], [1.0]])
    i, d = idx.query(np.array([[0.2], [0.9]]), 5)
    assert i.shape == (2, 2)
    assert idx.truncated_queries == 2


def test_oracle_small_cases():
    rng = np.random.default_rng(11)
    for _ in range(30):
        P, Q, k = random_configuration(rng)
        P, Q = P[:60], Q[:5]
        idx = build_index(P, Backend.ACCELERATED)
        for q in Q:
            got = query_knn(idx, q, k)
            want = oracle(P, q, min(k, P.shape[0]))
            assert [i for i, _ in got] == [i for _, i in want]
            np.testing.assert_allclose([d for _, d in got], [d for d, _ in want], rtol=1e-14)


def test_backends_agree_on_200_configurations():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        P, Q, k = random_configuration(rng)
        ib, db = build_index(P, Backend.BRUTE_FORCE).query(Q, k)
        ia, da = build_index(P, Backend.ACCELERATED).query(Q, k)
        assert np.array_equal(ia, ib)
        assert da.tobytes() == db.tobytes()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_average_distance_monotone_in_k(seed):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(int(rng.integers(2, 300)), int(rng.integers(1, 5))))
    q = rng.normal(size=P.shape[1])
    idx = build_index(P)
    avgs = [avg_knn_distance(idx, q, k) for k in range(1, P.shape[0] + 1)]
    assert all(b >= a for a, b in zip(avgs, avgs[1:]))


def test_concurrent_queries_match_sequential():
    rng = np.random.default_rng(5)
    P = rng.normal(size=(3000, 3))
    Q = rng.normal(size=(400, 3))
    idx = build_index(P)
    want = avg_knn_distances(idx, Q, 10)
    out = [None] * 8

    def run(t):
        out[t] = avg_knn_distances(idx, Q, 10)

    threads = [threading.Thread(target=run, args=(t,)) for t in range(8)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    for r in out:
        assert r.tobytes() == want.tobytes()


def test_worker_count_does_not_change_results():
    rng = np.random.default_rng(6)
    P = rng.integers(0, 4, size=(2000, 2)).astype(float)
    Q = rng.uniform(0, 3, size=(500, 2))
    a = NeighborIndex(P, workers=1).query(Q, 12)
    b = NeighborIndex(P, workers=4).query(Q, 12)
    assert np.array_equal(a[0], b[0]) and a[1].tobytes() == b[1].tobytes()
