"""Differentially private average treatment effect estimation across sites."""

__version__ = "0.1.0"

from .aggregation import AggregationResult, agg_all, agg_largest, aggregate, mvagg
from .core import (
    BudgetSplit,
    PrivacyBudget,
    PrivateSiteReport,
    SiteDataset,
    StratumCounts,
    load_csv,
    save_csv,
    split_budget,
    stratify,
)
from .estimators import (
    EstimatorKind,
    diff_in_means,
    dp_diff_in_means,
    estimate,
    global_dp_matching,
    smooth_dp_matching,
)
from .matching import (
    local_sensitivity_bound,
    match_and_estimate,
    smooth_sensitivity_tau,
    smooth_sensitivity_variance,
    variance_estimate_matching,
)
from .mechanisms import RandomStream, ZeroNoiseStream, beta_for, release_smooth_sensitivity
from .sim import ExperimentConfig, MaeTable, SynthParams, generate_synth, run_experiment, split_sites
