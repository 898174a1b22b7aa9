"""Fairness of reconstruction from lossy measurements.

Exact metrics for discrete models, posterior sampling (exact and annealed
Langevin), group reweighting for equal self-reconstruction rates, exact
binomial audits and numerical checks of symmetry and impossibility results.
"""

from .exceptions import DimensionError, DivergenceError, PreconditionError, UnreachableMeasurementError
from .metrics import (
    JointGroupMatrix,
    MetricsReport,
    cpr_gap,
    empirical_metrics,
    evaluate,
    joint_group_matrix,
    pr_gap,
    rce,
    rce_decomposition,
    rdp_vector,
    spe_gap,
)
from .model import (
    DiscreteChannel,
    DiscreteModel,
    GaussianLinearChannel,
    GaussianMixture,
    GroupCollection,
    block_average_gaussian_channel,
    block_average_operator,
    induced_measurement_distribution,
    mixture_posterior,
    tv_distance,
    validate,
)
from .posterior import (
    AnnealSchedule,
    ExactPosterior,
    FixedStochastic,
    LangevinPosteriorSampler,
    MapBaseline,
    exact_posterior,
    langevin_posterior_sample,
    map_reconstruct,
    posterior_matrix,
    sample,
    smoothed_score,
)
from .reweight import RDPReweighter, alpha_under_weights, reweighted_model, solve_rdp_weights
from .stats import BinomialTestResult, audit_from_counts, simulate_audit, spe_binomial_test
from .theory import (
    check_tv_spe_bound,
    check_winf_spe_bound,
    mismatched_joint,
    monotone_coupling,
    oblivious_rdp_infeasibility,
    rdp_pr_frontier,
)
from .verification import run_suite

__version__ = "0.1.0"

__all__ = [
    "AnnealSchedule",
    "BinomialTestResult",
    "DimensionError",
    "DiscreteChannel",
    "DiscreteModel",
    "DivergenceError",
    "ExactPosterior",
    "FixedStochastic",
    "GaussianLinearChannel",
    "GaussianMixture",
    "GroupCollection",
    "JointGroupMatrix",
    "LangevinPosteriorSampler",
    "MapBaseline",
    "MetricsReport",
    "PreconditionError",
    "RDPReweighter",
    "UnreachableMeasurementError",
    "alpha_under_weights",
    "audit_from_counts",
    "block_average_gaussian_channel",
    "block_average_operator",
    "check_tv_spe_bound",
    "check_winf_spe_bound",
    "cpr_gap",
    "empirical_metrics",
    "evaluate",
    "exact_posterior",
    "induced_measurement_distribution",
    "joint_group_matrix",
    "langevin_posterior_sample",
    "map_reconstruct",
    "mismatched_joint",
    "mixture_posterior",
    "monotone_coupling",
    "oblivious_rdp_infeasibility",
    "posterior_matrix",
    "pr_gap",
    "rce",
    "rce_decomposition",
    "rdp_pr_frontier",
    "rdp_vector",
    "reweighted_model",
    "run_suite",
    "sample",
    "simulate_audit",
    "smoothed_score",
    "solve_rdp_weights",
    "spe_binomial_test",
    "spe_gap",
    "tv_distance",
    "validate",
]
