"""Normalized spectral clustering of a learned affinity matrix."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .numerics import as_matrix, make_rng, sym_eigen

__all__ = [
    "ClusterAssignment",
    "isolated_vertices",
    "kmeans",
    "lloyd",
    "normalized_laplacian",
    "spectral_cluster",
    "spectral_embedding",
    "symmetrize",
]

DEFAULT_RESTARTS = 10
MAX_LLOYD_ITERATIONS = 300


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    k: int
    inertia: float = float("nan")
    isolated: tuple = field(default_factory=tuple)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.k):
            raise ValueError("labels must lie in 0..k-1")


def symmetrize(C):
    """``W = (|C| + |C^T|) / 2``."""
    C = as_matrix(C, "C")
    if C.shape[0] != C.shape[1]:
        raise DimensionError(f"C must be square, got shape {C.shape}")
    A = np.abs(C)
    return 0.5 * (A + A.T)


def isolated_vertices(W):
    """Indices of rows with zero degree."""
    W = np.asarray(W, dtype=np.float64)
    return tuple(int(i) for i in np.nonzero(W.sum(axis=1) == 0)[0])


def normalized_laplacian(W):
    """``L = I - D^{-1/2} W D^{-1/2}``.

    Zero-degree vertices get a zero entry in ``D^{-1/2}``; find them with
    :func:`isolated_vertices`.
    """
    W = as_matrix(W, "W")
    if W.shape[0] != W.shape[1]:
        raise DimensionError(f"W must be square, got shape {W.shape}")
    if np.any(W < 0):
        raise ValueError("W must be nonnegative")
    if not np.array_equal(W, W.T):
        raise ValueError("W must be symmetric")
    deg = W.sum(axis=1)
    inv_sqrt = np.zeros_like(deg)
    pos = deg > 0
    inv_sqrt[pos] = 1.0 / np.sqrt(deg[pos])
    S = inv_sqrt[:, None] * W * inv_sqrt[None, :]
    # keep L exactly symmetric despite rounding in the scaling above
    S = 0.5 * (S + S.T)
    return np.eye(W.shape[0]) - S


def _inertia(points, labels, centers):
    diff = points - centers[labels]
    return float(np.sum(diff * diff))


def _sq_dists(points, centers):
    d = (
        np.sum(points * points, axis=1)[:, None]
        - 2.0 * points @ centers.T
        + np.sum(centers * centers, axis=1)[None, :]
    )
    return np.maximum(d, 0.0)


def _kmeanspp(points, k, rng):
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(points, points[chosen])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # all remaining points coincide with a center
            idx = next(i for i in range(n) if i not in chosen)
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists(points, points[[idx]])[:, 0])
    return points[chosen].copy()


def lloyd(points, centers, max_iter=MAX_LLOYD_ITERATIONS):
    """Lloyd iterations from the given centers.

    Returns ``(labels, centers, inertia_history)``; the history holds the
    within-cluster sum of squares after each assignment step. Empty
    clusters keep their previous center.
    """
    centers = centers.copy()
    history = []
    labels = None
    for _ in range(max_iter):
        new_labels = np.argmin(_sq_dists(points, centers), axis=1)
        history.append(_inertia(points, new_labels, centers))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(centers.shape[0]):
            members = labels == j
            if np.any(members):
                centers[j] = points[members].mean(axis=0)
        history.append(_inertia(points, labels, centers))
    return labels, centers, history


def kmeans(points, k, seed=0, restarts=DEFAULT_RESTARTS):
    """k-means with k-means++ seeding; keeps the restart with lowest inertia.

    Restart ``r`` draws from the stream seeded by ``(seed, r)``, and ties in
    inertia go to the lowest restart index.
    """
    points = as_matrix(points, "points")
    n = points.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best = None
    for r in range(restarts):
        rng = make_rng([int(seed), r])
        labels, centers, _ = lloyd(points, _kmeanspp(points, k, rng))
        inertia = _inertia(points, labels, centers)
        if best is None or inertia < best[1]:
            best = (labels, inertia)
    return ClusterAssignment(best[0], k, best[1])


def spectral_embedding(C, k):
    """Rows of the ``k`` bottom eigenvectors of the normalized Laplacian,
    scaled to unit length (zero rows stay zero)."""
    W = symmetrize(C)
    L = normalized_laplacian(W)
    _, vecs = sym_eigen(L)
    U = vecs[:, :k]
    norms = np.linalg.norm(U, axis=1, keepdims=True)
    U = np.divide(U, norms, out=np.zeros_like(U), where=norms > 0)
    return U, isolated_vertices(W)


def spectral_cluster(C, k, seed=0, restarts=DEFAULT_RESTARTS):
    """Cluster the samples behind affinity ``C`` into ``k`` groups."""
    C = as_matrix(C, "C")
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > C.shape[0]:
        raise ValueError(f"k={k} exceeds the number of samples {C.shape[0]}")
    U, isolated = spectral_embedding(C, k)
    result = kmeans(U, k, seed, restarts)
    result.isolated = isolated
    return result
