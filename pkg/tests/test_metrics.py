import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from varadapt import kernels
from varadapt.metrics import (FeatureSet, MetricsReport, UndefinedMetricError, cluster_diversity,
                              diversity_pair_std, frechet_distance, intra_cluster_diversity,
                              kmedoids, knn_radii, precision_recall, sse_compactness)


def brute_force_cost(X, k):
    D = np.linalg.norm(X[:, None] - X[None], axis=-1)
    return min(D[list(m)].min(axis=0).sum() for m in itertools.combinations(range(len(X)), k))


# SSE ----------------------------------------------------------------------

def test_sse_identical_rows():
    assert sse_compactness(np.ones((5, 3))) == 0.0


def test_sse_two_points():
    assert sse_compactness([[0.0, 0.0], [2.0, 0.0]]) == 2.0


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (6, 3), elements=st.floats(-5, 5)), arrays(np.float64, (3,), elements=st.floats(-5, 5)))
def test_sse_translation_invariant(X, shift):
    assert sse_compactness(X + shift) == pytest.approx(sse_compactness(X), rel=1e-9, abs=1e-9)


# k-medoids ----------------------------------------------------------------

def test_kmedoids_k_equals_s(backend, rng):
    X = rng.normal(size=(6, 2))
    res = kmedoids(X, 6)
    assert res.cost == 0.0
    assert sorted(res.medoids) == list(range(6))


def test_kmedoids_line_example(backend):
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    res = kmedoids(X, 2)
    assert sorted(res.medoids.tolist()) == [0, 2]  # lowest index wins each tie
    assert res.membership[0] == res.membership[1] != res.membership[2] == res.membership[3]
    assert res.cost == 2.0


def test_kmedoids_k_too_large():
    with pytest.raises(ValueError):
        kmedoids(np.zeros((3, 2)), 4)


def test_kmedoids_matches_brute_force(backend):
    rng = np.random.default_rng(7)
    for _ in range(60):
        S = int(rng.integers(2, 9))
        k = int(rng.integers(1, S + 1))
        X = rng.normal(size=(S, int(rng.integers(1, 4))))
        assert kmedoids(X, k).cost == pytest.approx(brute_force_cost(X, k), rel=1e-12, abs=1e-12)


def test_kmedoids_monotone_and_own_cluster(backend, rng):
    X = rng.normal(size=(80, 4))
    res = kmedoids(X, 7, seed=3)
    assert all(b <= a + 1e-12 for a, b in zip(res.cost_history, res.cost_history[1:]))
    assert np.array_equal(res.membership[res.medoids], np.arange(7))
    D = np.linalg.norm(X[:, None] - X[None], axis=-1)
    nearest = D[res.medoids].min(axis=0)
    assert np.allclose(D[res.medoids[res.membership], np.arange(80)], nearest)


def test_kmedoids_deterministic(backend, rng):
    X = rng.normal(size=(50, 3))
    a, b = kmedoids(X, 5, seed=11), kmedoids(X, 5, seed=11)
    assert np.array_equal(a.medoids, b.medoids) and a.cost == b.cost


def test_backends_agree(rng):
    if len(kernels.available()) < 2:
        pytest.skip("compiled kernels not built")
    X = rng.normal(size=(120, 5))
    out = {}
    for b in kernels.available():
        kernels.use_backend(b)
        out[b] = (kernels.pairwise_distances(X), kmedoids(X, 9, seed=2))
    kernels.use_backend("cython")
    np.testing.assert_allclose(out["python"][0], out["cython"][0], rtol=0, atol=1e-12)
    assert np.array_equal(out["python"][1].medoids, out["cython"][1].medoids)


def test_pairwise_distances_oracle(backend, rng):
    X, Y = rng.normal(size=(9, 4)), rng.normal(size=(5, 4))
    np.testing.assert_allclose(kernels.pairwise_distances(X, Y),
                               np.linalg.norm(X[:, None] - Y[None], axis=-1), atol=1e-12)


# diversity ----------------------------------------------------------------

def test_diversity_identical_points(backend):
    assert intra_cluster_diversity(np.zeros((6, 2)), k=2) == (0.0, 0.0)


def test_diversity_line_example(backend):
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    assert intra_cluster_diversity(X, k=2) == (1.0, 1.0)


def test_diversity_avg_vs_all():
    # cluster 0: one pair at distance 1; cluster 1: equilateral triangle of side 3
    pts = np.array([[0.0, 0.0], [1.0, 0.0],
                    [100.0, 0.0], [103.0, 0.0], [101.5, 3.0 * np.sqrt(3) / 2]])
    D = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    avg, all_ = cluster_diversity(D, np.array([0, 0, 1, 1, 1]))
    assert avg == pytest.approx(2.0) and all_ == pytest.approx(2.5)


def test_diversity_all_singletons():
    with pytest.raises(UndefinedMetricError):
        intra_cluster_diversity(np.arange(4.0)[:, None], k=4)


def test_diversity_pair_std():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    assert diversity_pair_std(X, k=2) == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_diversity_permutation_and_translation(seed):
    # well-separated blobs give a unique optimal clustering, which PAM finds from any row order
    rng = np.random.default_rng(seed)
    centers = np.array([[0, 0, 0], [20, 0, 0], [0, 20, 0], [0, 0, 20]], dtype=float)
    X = np.repeat(centers, 8, axis=0) + rng.normal(size=(32, 3))
    base = intra_cluster_diversity(X, k=4)
    perm = rng.permutation(32)
    assert intra_cluster_diversity(X + 5.0, k=4) == pytest.approx(base, rel=1e-9)
    assert intra_cluster_diversity(X[perm], k=4) == pytest.approx(base, rel=1e-9)


# Frechet ------------------------------------------------------------------

def _with_moments(x, mu, sigma):
    z = (x - x.mean()) / x.std(ddof=1)
    return (mu + sigma * z)[:, None]


def test_frechet_univariate_closed_form(rng):
    x = rng.normal(size=50)
    A, B = _with_moments(x, 0.0, 1.0), _with_moments(rng.normal(size=40), 1.0, 2.0)
    assert frechet_distance(A, B) == pytest.approx(2.0, abs=1e-8)


def test_frechet_self_is_zero(rng):
    A = rng.normal(size=(60, 5))
    assert frechet_distance(A, A) < 1e-8


def test_frechet_diagonal_matches_sum_of_univariate(rng):
    mus = rng.normal(size=(2, 3))
    sig = rng.uniform(0.5, 2.0, size=(2, 3))
    cols_a = [_with_moments(rng.normal(size=400), mus[0, j], sig[0, j])[:, 0] for j in range(3)]
    cols_b = [_with_moments(rng.normal(size=400), mus[1, j], sig[1, j])[:, 0] for j in range(3)]
    # decorrelate columns exactly so the fitted covariances are diagonal
    A = np.stack(cols_a, 1)
    B = np.stack(cols_b, 1)
    A = _diagonalize(A)
    B = _diagonalize(B)
    ma, sa = A.mean(0), A.std(0, ddof=1)
    mb, sb = B.mean(0), B.std(0, ddof=1)
    expect = float(np.sum((ma - mb) ** 2 + (sa - sb) ** 2))
    assert frechet_distance(A, B) == pytest.approx(expect, abs=1e-8)


def _diagonalize(X):
    Xc = X - X.mean(0)
    w, V = np.linalg.eigh(np.cov(Xc, rowvar=False))
    Y = Xc @ V  # uncorrelated columns
    return Y + X.mean(0)


def test_frechet_shift_both_sets(rng):
    A, B = rng.normal(size=(30, 3)), rng.normal(size=(30, 3)) + 1
    s = rng.normal(size=3)
    assert frechet_distance(A + s, B + s) == pytest.approx(frechet_distance(A, B), rel=1e-9)


def test_frechet_needs_two_rows():
    with pytest.raises(ValueError):
        frechet_distance(np.zeros((1, 2)), np.zeros((3, 2)))


# precision / recall -------------------------------------------------------

@pytest.mark.parametrize("k", [1, 2, 3])
def test_precision_recall_self(k, rng):
    X = rng.normal(size=(20, 3))
    assert precision_recall(X, X, k) == (1.0, 1.0)


def test_precision_recall_disjoint(rng):
    X = rng.normal(size=(20, 3))
    assert precision_recall(X, X + 100.0, 2) == (0.0, 0.0)


def test_precision_recall_five_points():
    real = np.array([[0.0], [1.0], [2.0], [3.0], [4.0]])
    fake = np.array([[0.5], [4.5], [9.0], [2.2], [-1.5]])
    # k=1: every real radius is 1 (nearest other real point)
    r_real = knn_radii(real, 1)
    assert np.array_equal(r_real, np.ones(5))
    in_real = [min(abs(f - real[:, 0])) <= 1 for f in fake[:, 0]]
    r_fake = np.array([sorted(abs(f - fake[:, 0]))[1] for f in fake[:, 0]])
    in_fake = [np.any(abs(r - fake[:, 0]) <= r_fake) for r in real[:, 0]]
    assert precision_recall(real, fake, 1) == (np.mean(in_real), np.mean(in_fake))


def test_precision_recall_too_few_rows():
    with pytest.raises(ValueError):
        precision_recall(np.zeros((3, 2)), np.zeros((3, 2)), 3)


def test_metrics_permutation_invariant(rng):
    X, Y = rng.normal(size=(25, 3)), rng.normal(size=(25, 3)) + 0.3
    p = rng.permutation(25)
    assert sse_compactness(X[p]) == pytest.approx(sse_compactness(X), rel=1e-12)
    assert frechet_distance(X[p], Y) == pytest.approx(frechet_distance(X, Y), rel=1e-9)
    assert precision_recall(X[p], Y, 3) == precision_recall(X, Y, 3)


# data types ---------------------------------------------------------------

def test_feature_set_rejects_non_finite():
    with pytest.raises(ValueError):
        FeatureSet(np.array([[np.nan, 1.0]]))


def test_report_columns():
    assert MetricsReport.columns() == ["iter", "loss_dir", "loss_dm", "loss_ewc", "loss_rel",
                                       "loss_total", "sse", "diversity_avg", "diversity_all",
                                       "frechet", "precision", "recall"]
