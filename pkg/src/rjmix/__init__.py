"""Bayesian univariate normal mixtures: Gibbs and reversible-jump samplers."""
from .chain import Chain, MoveStats, read_chain_csv, write_chain_csv
from .diagnostics import condition_on_modal_k, dic, k_posterior, posterior_summary, predictive_density
from .errors import InvalidInputError, NumericFailureError, StudyFailureError
from .gibbs import McmcConfig, run_fixed_k
from .model import (
    Dataset,
    MixtureState,
    PriorSpec,
    Scenario,
    complete_data_log_likelihood,
    default_prior,
    enforce_ordering,
    log_likelihood,
    log_mixture_density,
    log_prior_density,
    simulate_dataset,
)
from .replication import MetricsTable, builtin_scenarios, run_replication_study
from .rjmcmc import run_rj

__version__ = "0.1.0"

__all__ = [
    "Chain",
    "Dataset",
    "InvalidInputError",
    "McmcConfig",
    "MetricsTable",
    "MixtureState",
    "MoveStats",
    "NumericFailureError",
    "PriorSpec",
    "Scenario",
    "StudyFailureError",
    "builtin_scenarios",
    "complete_data_log_likelihood",
    "condition_on_modal_k",
    "default_prior",
    "dic",
    "enforce_ordering",
    "k_posterior",
    "log_likelihood",
    "log_mixture_density",
    "log_prior_density",
    "posterior_summary",
    "predictive_density",
    "read_chain_csv",
    "run_fixed_k",
    "run_replication_study",
    "run_rj",
    "simulate_dataset",
    "write_chain_csv",
]
