"""Exact and numerically stable combination of independent weighted P-values."""

from .clustering import Cluster, ClusterSet, MomentTable, cluster, moments
from .core_model import (
    DomainError,
    LogTau,
    NormalizedInverseWeights,
    WeightedPValues,
    compute_raw_t,
    compute_t,
    h_function,
    log_h_function,
    normalize_inverse_weights,
)
from .exact import (
    CompositionTerm,
    Diagnostics,
    enumerate_compositions,
    fisher_combine,
    general_combine,
    good_combine,
)
from .expansion import (
    CombinedResult,
    ExpansionTerm,
    expansion_combine,
    generate_terms,
    good_to_fisher_limit_check,
)
from .oracle import MonteCarloEstimate, hp_evaluate, mc_estimate

__version__ = "0.1.0"

__all__ = [
    "Cluster",
    "ClusterSet",
    "CombinedResult",
    "CompositionTerm",
    "Diagnostics",
    "DomainError",
    "ExpansionTerm",
    "LogTau",
    "MomentTable",
    "MonteCarloEstimate",
    "NormalizedInverseWeights",
    "WeightedPValues",
    "cluster",
    "compute_raw_t",
    "compute_t",
    "enumerate_compositions",
    "expansion_combine",
    "fisher_combine",
    "general_combine",
    "generate_terms",
    "good_combine",
    "good_to_fisher_limit_check",
    "h_function",
    "hp_evaluate",
    "log_h_function",
    "mc_estimate",
    "moments",
    "normalize_inverse_weights",
]
