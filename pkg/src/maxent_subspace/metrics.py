"""Clustering scores and affinity-structure diagnostics.

Entropies use the natural log. ACC maps predicted clusters to classes with
an optimal one-to-one assignment (Kuhn-Munkres); NMI divides the mutual
information by the larger of the two marginal entropies.
"""

from dataclasses import dataclass

import numpy as np

from .data import minmax_normalize

__all__ = [
    "BlockDiagnostics",
    "MetricsReport",
    "accuracy",
    "block_diagnostics",
    "contingency",
    "evaluate",
    "homogeneity_completeness",
    "hungarian",
    "ideal_affinity",
    "nmi",
]


@dataclass(frozen=True)
class MetricsReport:
    acc_percent: float
    nmi_percent: float
    homogeneity: float
    completeness: float


@dataclass(frozen=True)
class BlockDiagnostics:
    block_variances: tuple
    off_block_mass: float
    cosine_to_ideal: float

    @property
    def mean_variance(self):
        return float(np.mean(self.block_variances))


def _labels_pair(y, y_pred):
    y = np.asarray(y).ravel()
    y_pred = np.asarray(y_pred).ravel()
    if y.shape != y_pred.shape:
        raise ValueError(f"label vectors differ in length: {y.size} vs {y_pred.size}")
    if y.size == 0:
        raise ValueError("label vectors are empty")
    return y, y_pred


def contingency(y, y_pred):
    """Count matrix ``N[a, b]`` = #samples with class ``a`` and cluster ``b``.

    Rows follow ``np.unique(y)``, columns ``np.unique(y_pred)``.
    """
    y, y_pred = _labels_pair(y, y_pred)
    _, yi = np.unique(y, return_inverse=True)
    _, pi = np.unique(y_pred, return_inverse=True)
    N = np.zeros((yi.max() + 1, pi.max() + 1), dtype=np.int64)
    np.add.at(N, (yi, pi), 1)
    return N


def _hungarian_core(cost):
    """Shortest-augmenting-path Kuhn-Munkres on a square matrix.

    Returns the row->column assignment and the dual potentials (u, v) with
    ``cost[i, j] - u[i] - v[j] >= 0`` and equality on the assignment.
    """
    n = cost.shape[0]
    inf = np.inf
    # 1-based arrays with a virtual column 0, following the classic formulation
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)  # match[col] = row
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            free = ~used[1:]
            cols = np.nonzero(free)[0] + 1
            cur = cost[i0 - 1, cols - 1] - u[i0] - v[cols]
            better = cur < minv[cols]
            minv[cols[better]] = cur[better]
            way[cols[better]] = j0
            j1 = cols[np.argmin(minv[cols])]
            delta = minv[j1]
            u[match[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while True:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
            if j0 == 0:
                break
    assign = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        assign[match[j] - 1] = j - 1
    return assign, u[1:], v[1:]


def _has_perfect_matching(allowed, fixed_rows, fixed_cols):
    """Kuhn's augmenting-path matching on the rows/cols not yet fixed."""
    n = allowed.shape[0]
    rows = [i for i in range(n) if i not in fixed_rows]
    owner = {}

    def augment(i, seen):
        for j in np.nonzero(allowed[i])[0]:
            j = int(j)
            if j in fixed_cols or j in seen:
                continue
            seen.add(j)
            if j not in owner or augment(owner[j], seen):
                owner[j] = i
                return True
        return False

    return all(augment(i, set()) for i in rows)


def hungarian(cost):
    """Minimum-cost perfect assignment on a square cost matrix.

    Among all optimal assignments the lexicographically smallest one (by
    row, then column) is returned, so ties break deterministically.

    Returns
    -------
    perm : ndarray of int
        ``perm[i]`` is the column assigned to row ``i``.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix has non-finite entries")
    n = cost.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    _, u, v = _hungarian_core(cost)
    # Optimal assignments are exactly the perfect matchings on tight edges
    # of an optimal dual, so a greedy lexicographic pass over them suffices.
    reduced = cost - u[:, None] - v[None, :]
    tol = 1e-9 * max(1.0, float(np.max(np.abs(cost))))
    tight = reduced <= tol
    perm = np.empty(n, dtype=np.int64)
    fixed_rows, fixed_cols = set(), set()
    for i in range(n):
        fixed_rows.add(i)
        for j in np.nonzero(tight[i])[0]:
            j = int(j)
            if j in fixed_cols:
                continue
            fixed_cols.add(j)
            if _has_perfect_matching(tight, fixed_rows, fixed_cols):
                perm[i] = j
                break
            fixed_cols.discard(j)
    return perm


def accuracy(y, y_pred):
    """Clustering accuracy in percent under the best one-to-one relabeling."""
    y, y_pred = _labels_pair(y, y_pred)
    N = contingency(y, y_pred)
    k = max(N.shape)
    padded = np.zeros((k, k), dtype=np.int64)
    padded[: N.shape[0], : N.shape[1]] = N
    perm = hungarian(-padded)
    matched = padded[np.arange(k), perm].sum()
    return 100.0 * matched / y.size


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def _mutual_information(N):
    n = N.sum()
    pxy = N / n
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    nz = pxy > 0
    return float(np.sum(pxy[nz] * np.log(pxy[nz] / (px @ py)[nz])))


def nmi(y, y_pred):
    """Normalized mutual information in percent, ``MI / max(H(Y), H(Y'))``.

    Both entropies vanish only when both labelings are constant, i.e. the
    partitions coincide, which scores 100.
    """
    y, y_pred = _labels_pair(y, y_pred)
    N = contingency(y, y_pred)
    denom = max(_entropy(N.sum(axis=1)), _entropy(N.sum(axis=0)))
    if denom == 0:
        return 100.0
    return float(np.clip(100.0 * _mutual_information(N) / denom, 0.0, 100.0))


def homogeneity_completeness(y, y_pred):
    """Return ``(homogeneity, completeness)``, each in [0, 1].

    ``h = 1 - H(Y|Y')/H(Y)`` and ``c = 1 - H(Y'|Y)/H(Y')`` with 0/0 := 1.
    """
    y, y_pred = _labels_pair(y, y_pred)
    N = contingency(y, y_pred)
    h_y = _entropy(N.sum(axis=1))
    h_p = _entropy(N.sum(axis=0))
    mi = _mutual_information(N)
    # H(Y|Y') = H(Y) - MI
    h = 1.0 if h_y == 0 else 1.0 - (h_y - mi) / h_y
    c = 1.0 if h_p == 0 else 1.0 - (h_p - mi) / h_p
    return float(np.clip(h, 0.0, 1.0)), float(np.clip(c, 0.0, 1.0))


def evaluate(y, y_pred):
    h, c = homogeneity_completeness(y, y_pred)
    return MetricsReport(accuracy(y, y_pred), nmi(y, y_pred), h, c)


def ideal_affinity(labels):
    """Block-constant matrix: 1 where two samples share a label, else 0."""
    labels = np.asarray(labels).ravel()
    return (labels[:, None] == labels[None, :]).astype(np.float64)


def block_diagnostics(C, labels):
    """Within-block uniformity and closeness to the ideal block structure.

    C is min-max normalized first. Reports the population variance of the
    normalized entries inside each ground-truth block (blocks ordered by
    sorted label value), the share of normalized mass outside the blocks,
    and the cosine similarity between the normalized C and the ideal matrix.
    """
    C = np.asarray(C, dtype=np.float64)
    labels = np.asarray(labels).ravel()
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"C must be square, got shape {C.shape}")
    if labels.size != C.shape[0]:
        raise ValueError(f"{labels.size} labels for a {C.shape[0]}x{C.shape[0]} affinity")
    Cn = minmax_normalize(C)
    ideal = ideal_affinity(labels)
    variances = tuple(
        float(np.var(Cn[np.ix_(labels == a, labels == a)])) for a in np.unique(labels)
    )
    total = Cn.sum()
    off = float(Cn[ideal == 0].sum() / total) if total > 0 else 0.0
    norm = np.linalg.norm(Cn)
    cos = float(np.sum(Cn * ideal) / (norm * np.linalg.norm(ideal))) if norm > 0 else 0.0
    return BlockDiagnostics(variances, off, cos)
