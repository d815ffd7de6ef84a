"""Bayesian sparse dynamic factor model with factor stochastic volatility.

Fits multi-subject, multi-condition region time series with spike-and-slab
loadings (intrinsic connectivity networks), AR(1) log-amplitude dynamics,
task-effect statistics, and a sparse behavioral regression, all by MCMC.
"""

from .behavior import (
    TaskEffect,
    compute_task_effects,
    ks_statistic,
    regression_gibbs_sweep,
    run_regression,
    summarize_associations,
)
from .data import load_behavioral_csv, load_manifest, preprocess
from .posthoc import (
    AlignmentPlan,
    align_draws,
    jaccard,
    mae,
    match_maps,
    model_selection_scores,
    posterior_summary,
    rmse_reconstruction,
    threshold_group_map,
)
from .sampler import ChainResult, FitConfig, FitResult, Sampler, pool_chains
from .simulate import (
    SimScenario,
    gen_dataset,
    group_benchmark_scenario,
    sparsity_benchmark_scenario,
    write_scenario,
)
from .types import (
    ChainState,
    Dataset,
    Dimensions,
    Hyperparameters,
    NumericalError,
    PosteriorDraws,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentPlan", "ChainResult", "ChainState", "Dataset", "Dimensions",
    "FitConfig", "FitResult", "Hyperparameters", "NumericalError",
    "PosteriorDraws", "Sampler", "SimScenario", "TaskEffect",
    "ValidationError", "align_draws", "compute_task_effects", "gen_dataset",
    "group_benchmark_scenario", "jaccard", "ks_statistic",
    "load_behavioral_csv", "load_manifest", "mae", "match_maps",
    "model_selection_scores", "pool_chains", "posterior_summary",
    "preprocess", "regression_gibbs_sweep", "rmse_reconstruction",
    "run_regression", "sparsity_benchmark_scenario", "summarize_associations",
    "threshold_group_map", "write_scenario",
]
