"""Per-site private pipelines that turn a dataset into a :class:`PrivateSiteReport`."""

from __future__ import annotations

import enum

from .core import PrivacyBudget, PrivateSiteReport, SiteDataset, split_budget, stratify
from .errors import DeltaZero, EmptyDataset, InsufficientForVariance, OneArmEmpty
from .matching import (
    match_and_estimate,
    smooth_sensitivity_tau,
    smooth_sensitivity_variance,
    variance_estimate_matching,
)
from .mechanisms import (
    RandomStream,
    beta_for,
    release_smooth_sensitivity,
    sample_laplace,
    smooth_laplace_scale,
)

# The Gaussian release of log S* is only proven for epsilon < 1. Larger
# allocations are spent at this value instead, which is still within budget.
GAUSSIAN_EPSILON_CAP = 1.0 - 1e-9


class EstimatorKind(str, enum.Enum):
    DIFF_IN_MEANS = "diff-in-means"
    SMOOTH_DP_MATCHING = "smooth-dp-matching"
    GLOBAL_DP_MATCHING = "global-dp-matching"


def diff_in_means(dataset: SiteDataset) -> float:
    w = dataset.w == 1
    if not w.any() or w.all():
        raise OneArmEmpty("difference in means needs both arms")
    return float(dataset.y[w].mean() - dataset.y[~w].mean())


def dp_diff_in_means(dataset: SiteDataset, budget: PrivacyBudget, rng: RandomStream) -> PrivateSiteReport:
    """Laplace-noised arm sums, plus a private variance from noised sums of squares.

    Half the budget goes to the arm sums (sensitivity B each, disjoint arms),
    half to the arm sums of squares (sensitivity B^2).
    """
    B = dataset.B
    treated = dataset.w == 1
    nt = int(treated.sum())
    nc = dataset.n - nt
    if nt == 0 or nc == 0:
        raise OneArmEmpty(f"site {dataset.site_id}: treated={nt}, control={nc}")
    if nt < 2 or nc < 2:
        raise InsufficientForVariance(f"site {dataset.site_id}: each arm needs >= 2 records")
    ledger = split_budget(budget, 2, ("ate", "variance"))
    e1 = ledger["ate"].epsilon
    e2 = ledger["variance"].epsilon

    yt, yc = dataset.y[treated], dataset.y[~treated]
    sum_t = yt.sum() + sample_laplace(B / e1, rng.child("sum_t"))
    sum_c = yc.sum() + sample_laplace(B / e1, rng.child("sum_c"))
    tau_dp = sum_t / nt - sum_c / nc

    sq_t = (yt * yt).sum() + sample_laplace(B * B / e2, rng.child("sq_t"))
    sq_c = (yc * yc).sum() + sample_laplace(B * B / e2, rng.child("sq_c"))
    s2_t = sq_t / nt - (sum_t / nt) ** 2
    s2_c = sq_c / nc - (sum_c / nc) ** 2
    sampling = max(0.0, s2_t / nt + s2_c / nc)
    noise_var = 2 * B * B * (1 / nt**2 + 1 / nc**2) / e1**2
    return PrivateSiteReport(tau_dp, sampling + noise_var, dataset.n, dataset.site_id, ledger,
                             EstimatorKind.DIFF_IN_MEANS.value, noise_scale=B / e1)


def smooth_dp_matching(dataset: SiteDataset, budget: PrivacyBudget, rng: RandomStream) -> PrivateSiteReport:
    """Matching estimate with smooth-sensitivity Laplace noise and a private variance.

    The budget is split three ways: the estimate, the sampling-variance
    estimate, and a private release of the estimate's smooth sensitivity,
    which sets the noise-variance term ``8 S*^2 / eps^2`` of the report.
    """
    if dataset.n == 0:
        raise EmptyDataset(f"site {dataset.site_id}: no records")
    if budget.delta <= 0:
        raise DeltaZero("smooth-sensitivity matching needs delta > 0")
    B = dataset.B
    ledger = split_budget(budget, 3, ("ate", "variance", "sensitivity"))
    ate, var, sens = ledger["ate"], ledger["variance"], ledger["sensitivity"]
    counts = stratify(dataset)
    matching = match_and_estimate(dataset)

    s_tau = smooth_sensitivity_tau(counts, B, beta_for(ate.epsilon, ate.delta))
    scale = smooth_laplace_scale(s_tau, ate.epsilon, ate.delta)
    tau_dp = matching.tau_hat + scale * sample_laplace(1.0, rng.child("ate"))

    s_var = smooth_sensitivity_variance(counts, B, beta_for(var.epsilon, var.delta))
    v_scale = smooth_laplace_scale(s_var, var.epsilon, var.delta)
    v_hat = variance_estimate_matching(dataset, matching)
    sampling = max(0.0, v_hat + v_scale * sample_laplace(1.0, rng.child("variance")))

    s_dp = release_smooth_sensitivity(s_tau, min(sens.epsilon, GAUSSIAN_EPSILON_CAP), sens.delta,
                                      rng.child("sensitivity"))
    noise_var = 8.0 * s_dp * s_dp / ate.epsilon**2
    return PrivateSiteReport(tau_dp, sampling + noise_var, dataset.n, dataset.site_id, ledger,
                             EstimatorKind.SMOOTH_DP_MATCHING.value, noise_scale=scale)


def global_dp_matching(dataset: SiteDataset, budget: PrivacyBudget, rng: RandomStream,
                       sensitivity: float | None = None) -> PrivateSiteReport:
    """Matching estimate with Laplace noise at a fixed global sensitivity (default B).

    The sampling variance estimate lies in [0, 2B^2], so it is released with
    Laplace noise at sensitivity 2B^2. The noise-variance term is public.
    """
    if dataset.n == 0:
        raise EmptyDataset(f"site {dataset.site_id}: no records")
    B = dataset.B
    delta_tau = B if sensitivity is None else sensitivity
    ledger = split_budget(budget, 2, ("ate", "variance"))
    e_ate = ledger["ate"].epsilon
    e_var = ledger["variance"].epsilon
    matching = match_and_estimate(dataset)
    scale = delta_tau / e_ate
    tau_dp = matching.tau_hat + sample_laplace(scale, rng.child("ate"))
    v_hat = variance_estimate_matching(dataset, matching)
    sampling = max(0.0, v_hat + sample_laplace(2 * B * B / e_var, rng.child("variance")))
    return PrivateSiteReport(tau_dp, sampling + 2 * scale * scale, dataset.n, dataset.site_id,
                             ledger, EstimatorKind.GLOBAL_DP_MATCHING.value, noise_scale=scale)


ESTIMATORS = {
    EstimatorKind.DIFF_IN_MEANS: dp_diff_in_means,
    EstimatorKind.SMOOTH_DP_MATCHING: smooth_dp_matching,
    EstimatorKind.GLOBAL_DP_MATCHING: global_dp_matching,
}


def estimate(kind, dataset: SiteDataset, budget: PrivacyBudget, rng: RandomStream) -> PrivateSiteReport:
    return ESTIMATORS[EstimatorKind(kind)](dataset, budget, rng)


def non_private_estimate(kind, dataset: SiteDataset) -> float:
    """The estimate the private pipeline of ``kind`` perturbs."""
    if EstimatorKind(kind) is EstimatorKind.DIFF_IN_MEANS:
        return diff_in_means(dataset)
    return match_and_estimate(dataset).tau_hat
