"""Dense numeric kernels: symmetric eigensolver, seeded RNG, He init, ADAM.

Everything here works in float64. Random streams come from numpy's PCG64
bit generator, whose output for a given integer seed is stable across numpy
releases (numpy's documented stream-compatibility policy for bit
generators), so a seed reproduces the same draws on every build.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

__all__ = [
    "AdamState",
    "adam_step",
    "as_matrix",
    "he_normal_init",
    "make_rng",
    "sym_eigen",
]

JACOBI_TOL = 1e-12
MAX_SWEEPS = 100


def make_rng(seed):
    """Return a ``numpy.random.Generator`` backed by PCG64.

    ``seed`` may be a non-negative integer, a sequence of integers (mixed by
    ``SeedSequence``), or an existing Generator, which is returned as is.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (int, np.integer)):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        return np.random.Generator(np.random.PCG64(int(seed)))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def as_matrix(a, name="matrix"):
    """Convert ``a`` to a finite 2-D float64 array, raising on bad input."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DimensionError(f"{name} contains non-finite entries")
    return m


def _round_robin(m):
    """Pairings for a round-robin tournament on ``m`` (even) players.

    Each round is a set of disjoint pairs; over ``m - 1`` rounds every pair
    appears exactly once.
    """
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        half = m // 2
        rounds.append([(players[i], players[m - 1 - i]) for i in range(half)])
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def sym_eigen(a, tol=JACOBI_TOL, max_sweeps=MAX_SWEEPS):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Rotations are applied in round-robin order, so each round rotates a set
    of disjoint index pairs at once. Sweeps stop once the off-diagonal
    Frobenius mass drops below ``tol * ||A||_F``.

    Parameters
    ----------
    a : array_like, shape (n, n)
        Symmetric matrix.

    Returns
    -------
    w : ndarray, shape (n,)
        Eigenvalues in ascending order.
    v : ndarray, shape (n, n)
        Orthonormal eigenvectors; column ``i`` pairs with ``w[i]``.
    """
    a = as_matrix(a, "A")
    n, m = a.shape
    if n != m:
        raise DimensionError(f"A must be square, got shape {a.shape}")
    scale = np.max(np.abs(a))
    if np.max(np.abs(a - a.T)) > 1e-10 * scale:
        raise DimensionError("A is not symmetric")
    A = 0.5 * (a + a.T)
    V = np.eye(n)
    if n == 1:
        return A.diagonal().copy(), V

    size = n + (n % 2)
    rounds = []
    for pairs in _round_robin(size):
        pairs = [(p, q) if p < q else (q, p) for p, q in pairs if p < n and q < n]
        rounds.append((np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])))

    norm = np.linalg.norm(A)
    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        if np.linalg.norm(A[offdiag]) <= tol * norm:
            break
        for P, Q in rounds:
            apq = A[P, Q]
            active = apq != 0.0
            if not np.any(active):
                continue
            P, Q, apq = P[active], Q[active], apq[active]
            # a vanishing a_pq gives theta = inf and t = 0, an identity rotation
            with np.errstate(over="ignore", divide="ignore"):
                theta = (A[Q, Q] - A[P, P]) / (2.0 * apq)
                t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.hypot(theta, 1.0))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # A <- J^T A J, columns first then rows
            ap, aq = A[:, P].copy(), A[:, Q].copy()
            A[:, P] = c * ap - s * aq
            A[:, Q] = s * ap + c * aq
            ap, aq = A[P, :].copy(), A[Q, :].copy()
            A[P, :] = c[:, None] * ap - s[:, None] * aq
            A[Q, :] = s[:, None] * ap + c[:, None] * aq
            vp, vq = V[:, P].copy(), V[:, Q].copy()
            V[:, P] = c * vp - s * vq
            V[:, Q] = s * vp + c * vq
    w = A.diagonal().copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def he_normal_init(shape, fan_in, rng):
    """Draw an array of ``shape`` from N(0, 2 / fan_in)."""
    if fan_in < 1:
        raise ValueError(f"fan_in must be >= 1, got {fan_in}")
    rng = make_rng(rng)
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


@dataclass(frozen=True)
class AdamState:
    """Moment accumulators for one parameter array."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, shape, **kwargs):
        return cls(np.zeros(shape), np.zeros(shape), **kwargs)


def adam_step(params, grads, state, learning_rate):
    """One bias-corrected ADAM update.

    Returns new ``(params, state)``; the inputs are left untouched.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise DimensionError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}"
        )
    if not learning_rate > 0:
        raise ValueError(f"learning_rate must be positive, got {learning_rate}")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    # in-place arithmetic on fresh arrays keeps small-matrix overhead down
    m = state.m * b1
    m += (1.0 - b1) * grads
    v = grads * grads
    v *= 1.0 - b2
    v += b2 * state.v
    denom = v / (1.0 - b2**t)
    np.sqrt(denom, out=denom)
    denom += state.eps
    step = m * (learning_rate / (1.0 - b1**t))
    step /= denom
    return params - step, AdamState(m, v, t, b1, b2, state.eps)
