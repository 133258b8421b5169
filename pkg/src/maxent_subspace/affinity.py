"""Self-expressive affinity learning.

Learns ``C`` in ``Z ~ Z C`` by minimizing

    lambda1 * R(C) + lambda2 * ||Z - Z C||_F^2

where ``R`` is one of four penalties: the negative entropy
``sum c_ij ln c_ij`` (with ``c_ij >= 0``), the l1 norm, the squared
Frobenius norm, or the nuclear norm. All solvers share one loop: an ADAM
step on the smooth part followed by a feasibility map (floor at epsilon for
the entropy, soft-thresholding for l1, singular-value thresholding for the
nuclear norm).
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DivergenceError, DomainError
from .numerics import AdamState, adam_step, as_matrix

logger = logging.getLogger(__name__)

__all__ = [
    "AffinityMatrix",
    "RegularizerSpec",
    "SolveReport",
    "SolverConfig",
    "closed_form_frobenius",
    "me_gradient",
    "me_objective",
    "neg_entropy",
    "objective",
    "permute_affinity",
    "prox_l1",
    "prox_nuclear",
    "regularizer_value",
    "solve_affinity",
    "uniform_affinity",
]

MAX_ENTROPY = "max-entropy"
L1 = "l1"
FROBENIUS = "frobenius-squared"
NUCLEAR = "nuclear"
KINDS = (MAX_ENTROPY, L1, FROBENIUS, NUCLEAR)

_ALIASES = {
    "me": MAX_ENTROPY,
    "maxent": MAX_ENTROPY,
    "max-entropy": MAX_ENTROPY,
    "l1": L1,
    "fro": FROBENIUS,
    "frobenius": FROBENIUS,
    "frobenius-squared": FROBENIUS,
    "l2": FROBENIUS,
    "nuc": NUCLEAR,
    "nuclear": NUCLEAR,
}

SHORT_NAMES = {MAX_ENTROPY: "me", L1: "l1", FROBENIUS: "fro", NUCLEAR: "nuc"}

CONVERGENCE_WINDOW = 10

# An affinity matrix is a plain (n, n) float64 array.
AffinityMatrix = np.ndarray


def canonical_kind(kind):
    try:
        return _ALIASES[str(kind).strip().lower()]
    except KeyError:
        raise ValueError(
            f"unknown regularizer {kind!r}; expected one of {sorted(_ALIASES)}"
        ) from None


@dataclass(frozen=True)
class RegularizerSpec:
    """Penalty on C and the two trade-off weights."""

    kind: str = MAX_ENTROPY
    lambda1: float = 1.0
    lambda2: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_kind(self.kind))
        for name in ("lambda1", "lambda2"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive real, got {value!r}")


@dataclass(frozen=True)
class SolverConfig:
    """Settings for :func:`solve_affinity`.

    ``zero_diagonal=None`` picks the regularizer's default: off for the
    entropy penalty, on for l1 / Frobenius / nuclear. ``seed`` is recorded
    for provenance; the solver itself is deterministic (C starts at 1/n).
    A ``relative_tolerance`` of 0 disables early stopping.
    """

    learning_rate: float = 1e-4
    max_iterations: int = 20000
    relative_tolerance: float = 1e-8
    epsilon: float = 1e-12
    seed: int = 0
    zero_diagonal: bool | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.relative_tolerance < 0:
            raise ValueError("relative_tolerance must be non-negative")

    def resolved_zero_diagonal(self, kind):
        if self.zero_diagonal is None:
            return canonical_kind(kind) != MAX_ENTROPY
        return bool(self.zero_diagonal)


@dataclass
class SolveReport:
    C: np.ndarray
    objective_trace: np.ndarray
    iterations: int
    converged: bool
    config: SolverConfig = field(default_factory=SolverConfig)
    regularizer: RegularizerSpec = field(default_factory=RegularizerSpec)


def _check_pair(Z, C):
    Z = as_matrix(Z, "Z")
    C = as_matrix(C, "C")
    n = Z.shape[1]
    if C.shape != (n, n):
        raise DimensionError(f"C must be {n}x{n} for Z with {n} columns, got {C.shape}")
    return Z, C


def neg_entropy(C):
    """Return ``sum c_ij ln c_ij`` with ``0 ln 0 = 0``."""
    C = np.asarray(C, dtype=np.float64)
    if np.any(C < 0):
        raise DomainError("negative entry in C; entropy is defined for c >= 0")
    pos = C[C > 0]
    return float(np.sum(pos * np.log(pos)))


def me_objective(Z, C, lambda1, lambda2):
    """``lambda1 * sum c ln c + lambda2 * ||Z - Z C||_F^2``."""
    Z, C = _check_pair(Z, C)
    R = Z - Z @ C
    return lambda1 * neg_entropy(C) + lambda2 * float(np.sum(R * R))


def me_gradient(Z, C, lambda1, lambda2, epsilon=1e-12):
    """Gradient of :func:`me_objective` with respect to C.

    ``lambda1 * (ln C + 1) - 2 lambda2 Z^T (Z - Z C)``. Entries of C below
    ``epsilon`` are rejected; clamp before calling.
    """
    Z, C = _check_pair(Z, C)
    if np.any(C < epsilon):
        raise DomainError(f"entries of C must be >= epsilon={epsilon} for the entropy gradient")
    R = Z - Z @ C
    return lambda1 * (np.log(C) + 1.0) - 2.0 * lambda2 * (Z.T @ R)


def regularizer_value(C, kind):
    """Unweighted penalty ``R(C)`` for the given kind."""
    if kind not in KINDS:
        kind = canonical_kind(kind)
    if kind == MAX_ENTROPY:
        return neg_entropy(C)
    if kind == L1:
        return float(np.abs(C).sum())
    if kind == FROBENIUS:
        c = np.ravel(C)
        return float(c @ c)
    return float(np.sum(np.linalg.svd(C, compute_uv=False)))


def objective(Z, C, reg):
    """Full objective ``lambda1 * R(C) + lambda2 * ||Z - Z C||_F^2``."""
    Z, C = _check_pair(Z, C)
    R = Z - Z @ C
    return reg.lambda1 * regularizer_value(C, reg.kind) + reg.lambda2 * float(np.sum(R * R))


def closed_form_frobenius(Z, lambda1, lambda2):
    """Exact minimizer of ``lambda1 ||C||_F^2 + lambda2 ||Z - Z C||_F^2``.

    Solves ``(lambda1 I + lambda2 Z^T Z) C = lambda2 Z^T Z``.
    """
    Z = as_matrix(Z, "Z")
    if not lambda1 > 0:
        raise ValueError(f"lambda1 must be positive, got {lambda1}")
    G = Z.T @ Z
    n = G.shape[0]
    return np.linalg.solve(lambda1 * np.eye(n) + lambda2 * G, lambda2 * G)


def prox_l1(M, threshold):
    """Elementwise soft-thresholding, the prox of ``threshold * ||.||_1``."""
    if threshold < 0:
        raise ValueError(f"threshold must be non-negative, got {threshold}")
    M = np.asarray(M, dtype=np.float64)
    return np.sign(M) * np.maximum(np.abs(M) - threshold, 0.0)


def prox_nuclear(M, threshold):
    """Singular-value soft-thresholding, the prox of ``threshold * ||.||_*``."""
    if threshold < 0:
        raise ValueError(f"threshold must be non-negative, got {threshold}")
    M = as_matrix(M, "M")
    if threshold == 0:
        return M.copy()
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    return (U * np.maximum(s - threshold, 0.0)) @ Vt


def permute_affinity(C, perm):
    """Return ``P^T C P``: entry (i, j) of the result is ``C[perm[i], perm[j]]``.

    ``perm`` is a 0-based permutation of ``range(n)``.
    """
    C = np.asarray(C, dtype=np.float64)
    perm = np.asarray(perm)
    n = C.shape[0]
    if C.ndim != 2 or C.shape[1] != n:
        raise DimensionError(f"C must be square, got shape {C.shape}")
    if (
        perm.shape != (n,)
        or not np.issubdtype(perm.dtype, np.integer)
        or not np.array_equal(np.sort(perm), np.arange(n))
    ):
        raise ValueError("perm must be a bijection on {0, ..., n-1}")
    return C[np.ix_(perm, perm)]


def uniform_affinity(n):
    """The starting point used by every solver: all entries ``1/n``."""
    return np.full((n, n), 1.0 / n)


def _smooth_gradient(Z, C, R, reg, zero_diagonal):
    g = Z.T @ R
    g *= -2.0 * reg.lambda2
    if reg.kind == MAX_ENTROPY:
        logc = np.log(C, where=C > 0, out=np.zeros_like(C))
        g += reg.lambda1 * (logc + 1.0)
    elif reg.kind == FROBENIUS:
        g += 2.0 * reg.lambda1 * C
    if zero_diagonal:
        np.fill_diagonal(g, 0.0)
    return g


def project(C, reg, step, epsilon, zero_diagonal):
    """Feasibility map applied after each gradient step.

    ``step`` is the learning rate, which scales the proximal thresholds.
    """
    if reg.kind == MAX_ENTROPY:
        C = np.maximum(C, epsilon)
    elif reg.kind == L1:
        C = prox_l1(C, step * reg.lambda1)
    elif reg.kind == NUCLEAR:
        C = prox_nuclear(C, step * reg.lambda1)
    if zero_diagonal:
        C = C.copy()
        np.fill_diagonal(C, 0.0)
    return C


def solve_affinity(Z, reg=None, cfg=None, C0=None):
    """Minimize the regularized self-expressive objective over C.

    Parameters
    ----------
    Z : array_like, shape (d, n)
        Feature matrix, one column per sample.
    reg : RegularizerSpec
    cfg : SolverConfig
    C0 : array_like, optional
        Starting point; defaults to the uniform matrix ``1/n``.

    Returns
    -------
    SolveReport
    """
    reg = reg or RegularizerSpec()
    cfg = cfg or SolverConfig()
    Z = as_matrix(Z, "Z")
    n = Z.shape[1]
    if n < 2:
        raise DimensionError("Z needs at least two columns")
    zero_diag = cfg.resolved_zero_diagonal(reg.kind)
    C = uniform_affinity(n) if C0 is None else _check_pair(Z, C0)[1].copy()
    C = project(C, reg, 0.0, cfg.epsilon, zero_diag)
    state = AdamState.zeros(C.shape)
    trace = []
    converged = False
    R = Z - Z @ C
    for it in range(1, cfg.max_iterations + 1):
        grad = _smooth_gradient(Z, C, R, reg, zero_diag)
        C, state = adam_step(C, grad, state, cfg.learning_rate)
        C = project(C, reg, cfg.learning_rate, cfg.epsilon, zero_diag)
        R = Z - Z @ C
        r = R.ravel()
        f = reg.lambda1 * regularizer_value(C, reg.kind) + reg.lambda2 * float(r @ r)
        if not np.isfinite(f):
            raise DivergenceError(it, f)
        trace.append(f)
        if it > CONVERGENCE_WINDOW and cfg.relative_tolerance > 0:
            # the whole window must be flat; endpoint differences are fooled by ADAM oscillation
            window = trace[-1 - CONVERGENCE_WINDOW:]
            spread = max(window) - min(window)
            if spread < cfg.relative_tolerance * max(abs(f), np.finfo(float).tiny):
                converged = True
                break
    logger.debug("solve_affinity %s: %d iterations, converged=%s", reg.kind, len(trace), converged)
    return SolveReport(C, np.asarray(trace), len(trace), converged, cfg, reg)
