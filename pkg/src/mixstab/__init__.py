"""Exact desk-scale checks of Markov-length stability for noisy Gibbs states."""

__version__ = "0.1.0"

from .exceptions import (
    BudgetExceededError,
    NotStabilizerMixingError,
    PreconditionError,
    ZeroProbabilityError,
    budget,
)
from .gibbs import DiscreteDistribution, GibbsModel, cmi, entropy, ising_model, marginal, total_variation
from .graph import Hypergraph, Tripartition, annulus_tripartition, graph_distance, grid, path, separates
from .noise import LayeredProcess, LocalChannel, block_spins, pin_single_site, spacetime_model
from .pinned import PinnedModel
from .polymer import ClusterExpansion, critical_epsilon, critical_pinning, kp_certificate
from .recovery import MarkovLength, PatchRecovery
from .stabilizer import PauliOperator, StabilizerHamiltonian, stabilizer_distribution

__all__ = [
    "BudgetExceededError",
    "NotStabilizerMixingError",
    "PreconditionError",
    "ZeroProbabilityError",
    "budget",
    "DiscreteDistribution",
    "GibbsModel",
    "cmi",
    "entropy",
    "ising_model",
    "marginal",
    "total_variation",
    "Hypergraph",
    "Tripartition",
    "annulus_tripartition",
    "graph_distance",
    "grid",
    "path",
    "separates",
    "LayeredProcess",
    "LocalChannel",
    "block_spins",
    "pin_single_site",
    "spacetime_model",
    "PinnedModel",
    "ClusterExpansion",
    "critical_epsilon",
    "critical_pinning",
    "kp_certificate",
    "MarkovLength",
    "PatchRecovery",
    "PauliOperator",
    "StabilizerHamiltonian",
    "stabilizer_distribution",
]
