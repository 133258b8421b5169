"""Subspace clustering with an entropy-regularized self-expressive affinity."""

__version__ = "0.1.0"

from .affinity import (
    RegularizerSpec,
    SolveReport,
    SolverConfig,
    closed_form_frobenius,
    me_gradient,
    me_objective,
    neg_entropy,
    permute_affinity,
    solve_affinity,
)
from .data import SyntheticSpec, gen_images, gen_subspaces
from .metrics import accuracy, block_diagnostics, evaluate, nmi
from .spectral import spectral_cluster
