import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxent_subspace.affinity import RegularizerSpec, permute_affinity, solve_affinity
from maxent_subspace.data import SyntheticSpec, gen_subspaces
from maxent_subspace.metrics import accuracy, nmi
from maxent_subspace.numerics import sym_eigen
from maxent_subspace.spectral import (
    isolated_vertices,
    kmeans,
    lloyd,
    normalized_laplacian,
    spectral_cluster,
    symmetrize,
)


def block_graph(sizes, seed=0):
    rng = np.random.default_rng(seed)
    n = sum(sizes)
    W = np.zeros((n, n))
    start = 0
    for s in sizes:
        B = rng.uniform(0.5, 1.5, (s, s))
        W[start:start + s, start:start + s] = B + B.T
        start += s
    return W


def test_symmetrize_examples():
    A = np.random.default_rng(0).uniform(size=(4, 4))
    S = A + A.T
    assert np.array_equal(symmetrize(S), S)
    np.testing.assert_array_equal(symmetrize([[0.0, 1.0], [0.0, 0.0]]), [[0, 0.5], [0.5, 0]])
    M = np.random.default_rng(1).standard_normal((6, 6))
    W = symmetrize(M)
    assert np.array_equal(W, W.T) and W.min() >= 0


def test_laplacian_complete_graph_with_self_loops():
    w, _ = sym_eigen(normalized_laplacian(np.ones((3, 3))))
    np.testing.assert_allclose(w, [0, 1, 1], atol=1e-12)


@pytest.mark.parametrize("sizes", [[5], [3, 4], [2, 3, 4]])
def test_zero_eigenvalue_counts_components(sizes):
    L = normalized_laplacian(block_graph(sizes))
    w, _ = sym_eigen(L)
    assert np.sum(np.abs(w) < 1e-9) == len(sizes)
    assert w.min() >= -1e-12 and w.max() <= 2 + 1e-12


def test_laplacian_exactly_symmetric():
    W = symmetrize(np.random.default_rng(2).uniform(size=(9, 9)))
    L = normalized_laplacian(W)
    assert np.array_equal(L, L.T)


def test_isolated_vertex_is_flagged():
    W = block_graph([3, 2])
    W[1, :] = W[:, 1] = 0.0
    assert isolated_vertices(W) == (1,)
    L = normalized_laplacian(W)
    assert np.all(np.isfinite(L))
    res = spectral_cluster(W, 2)
    assert res.isolated == (1,)


def test_laplacian_rejects_bad_weights():
    with pytest.raises(ValueError):
        normalized_laplacian([[0.0, -1.0], [-1.0, 0.0]])
    with pytest.raises(ValueError):
        normalized_laplacian([[0.0, 1.0], [0.5, 0.0]])


def test_kmeans_separated_pairs():
    pts = np.array([[0, 0], [10, 10], [0, 1], [10, 11]], dtype=float)
    res = kmeans(pts, 2, seed=0)
    assert res.labels[0] == res.labels[2] != res.labels[1] == res.labels[3]


def test_kmeans_single_cluster_and_singletons():
    pts = np.random.default_rng(3).standard_normal((7, 2))
    assert np.array_equal(kmeans(pts, 1).labels, np.zeros(7))
    res = kmeans(pts, 7)
    assert res.inertia == 0.0
    assert len(set(res.labels.tolist())) == 7


def test_kmeans_rejects_too_many_clusters():
    with pytest.raises(ValueError):
        kmeans(np.zeros((3, 2)), 4)


def test_kmeans_deterministic_per_seed():
    pts = np.random.default_rng(4).standard_normal((40, 3))
    a, b = kmeans(pts, 4, seed=9), kmeans(pts, 4, seed=9)
    assert np.array_equal(a.labels, b.labels) and a.inertia == b.inertia


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_lloyd_monotone(seed, k):
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((30, 2))
    centers = pts[rng.choice(30, k, replace=False)]
    _, _, history = lloyd(pts, centers)
    assert np.all(np.diff(history) <= 1e-9 * max(history[0], 1.0))


def test_spectral_cluster_exact_blocks():
    C = np.kron(np.eye(3), np.ones((4, 4)))
    labels = np.repeat([0, 1, 2], 4)
    res = spectral_cluster(C, 3)
    assert accuracy(labels, res.labels) == 100.0


def test_spectral_cluster_permutation_equivariance():
    rng = np.random.default_rng(5)
    C = block_graph([6, 5, 7]) + 0.01 * rng.uniform(size=(18, 18))
    perm = rng.permutation(18)
    a = spectral_cluster(C, 3).labels
    b = spectral_cluster(permute_affinity(C, perm), 3).labels
    assert accuracy(a[perm], b) == 100.0


def test_spectral_cluster_argument_checks():
    with pytest.raises(ValueError):
        spectral_cluster(np.eye(3), 1)
    with pytest.raises(ValueError):
        spectral_cluster(np.eye(3), 4)


def test_pipeline_noise_free_subspaces():
    Z, labels = gen_subspaces(SyntheticSpec())
    C = solve_affinity(Z, RegularizerSpec("me", 1, 10)).C
    pred = spectral_cluster(C, 3).labels
    assert accuracy(labels, pred) == 100.0
    assert nmi(labels, pred) == pytest.approx(100.0, abs=1e-9)
