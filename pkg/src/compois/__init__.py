"""Exact COM-Poisson sampling, unbiased likelihood estimation and regression inference."""

from .core import (
    approx_moments,
    converged_log_z,
    log_unnormalized_mass,
    mode,
    oracle_moments,
    oracle_pmf,
    truncated_loglik,
    truncated_Z,
)
from .envelope import (
    BoundDecomposition,
    Envelope,
    brute_force_bound,
    build_envelope,
    choose_p,
    envelope_log_density,
)
from .estimator import (
    LikelihoodEstimate,
    MhatEstimate,
    bic_estimate,
    estimate_M,
    log_reciprocal_Z_estimate,
    unbiased_loglik,
)
from .glm import (
    BoundModel,
    DirectModel,
    GammaPrior,
    ModelSpec,
    NormalPrior,
    builtin_models,
    link_eval,
    load_dataset,
    log_prior,
    parse_formula,
)
from .mcmc import ChainResult, McmcConfig, mcse_mean, mess, run_chain
from .params import (
    CmpParams,
    CompoisError,
    ConvergenceError,
    DataError,
    DivergentLinkError,
    InvalidWindowError,
    RunawayRejectionError,
    TruncationWindow,
)
from .rejection import (
    BatchDraws,
    DrawWithCost,
    acceptance_grid,
    sample_each,
    sample_one,
    sample_r,
)
from .rng import make_rng, resolve_seed, split_rng

__version__ = "0.1.0"

__all__ = [
    "CmpParams",
    "TruncationWindow",
    "Envelope",
    "BoundDecomposition",
    "DrawWithCost",
    "BatchDraws",
    "MhatEstimate",
    "LikelihoodEstimate",
    "ModelSpec",
    "NormalPrior",
    "GammaPrior",
    "BoundModel",
    "DirectModel",
    "McmcConfig",
    "ChainResult",
    "CompoisError",
    "InvalidWindowError",
    "ConvergenceError",
    "RunawayRejectionError",
    "DivergentLinkError",
    "DataError",
    "log_unnormalized_mass",
    "mode",
    "approx_moments",
    "truncated_Z",
    "converged_log_z",
    "oracle_pmf",
    "oracle_moments",
    "truncated_loglik",
    "choose_p",
    "build_envelope",
    "envelope_log_density",
    "brute_force_bound",
    "sample_one",
    "sample_r",
    "sample_each",
    "acceptance_grid",
    "estimate_M",
    "log_reciprocal_Z_estimate",
    "unbiased_loglik",
    "bic_estimate",
    "parse_formula",
    "builtin_models",
    "load_dataset",
    "link_eval",
    "log_prior",
    "run_chain",
    "mess",
    "mcse_mean",
    "make_rng",
    "split_rng",
    "resolve_seed",
]
