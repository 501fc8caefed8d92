"""Server-side combination of site reports."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import PrivateSiteReport
from .errors import NoReports, TooManySites

MAX_SITES = 20


@dataclass(frozen=True)
class AggregationResult:
    tau_final: float
    chosen_sites: tuple[str, ...]
    predicted_variance: float
    method: str
    chosen_index: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "tau_final": self.tau_final,
            "chosen_sites": list(self.chosen_sites),
            "predicted_variance": self.predicted_variance,
            "method": self.method,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def subset_variance(reports: Sequence[PrivateSiteReport], index: Sequence[int]) -> float:
    """Variance of the size-weighted average over ``index``: sum_j (N_j/N_I)^2 var_j."""
    n_total = sum(reports[j].n for j in index)
    return sum((reports[j].n / n_total) ** 2 * reports[j].var_dp for j in index)


def _combine(reports, index, method) -> AggregationResult:
    index = tuple(sorted(index))
    n_total = sum(reports[j].n for j in index)
    tau = sum(reports[j].n / n_total * reports[j].tau_dp for j in index)
    return AggregationResult(tau, tuple(reports[j].site_id for j in index),
                             subset_variance(reports, index), method, index)


def _check(reports):
    if len(reports) == 0:
        raise NoReports("no site reports to aggregate")


def mvagg(reports: Sequence[PrivateSiteReport]) -> AggregationResult:
    """Minimum-variance aggregation over all non-empty subsets of sites.

    Ties go to the larger subset, then to the lexicographically smallest
    tuple of report positions.
    """
    _check(reports)
    J = len(reports)
    if J > MAX_SITES:
        raise TooManySites(f"exhaustive search is capped at {MAX_SITES} sites, got {J}")
    n = np.array([r.n for r in reports], dtype=np.float64)
    v = np.array([r.var_dp for r in reports], dtype=np.float64)
    masks = np.arange(1, 2**J, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(J)) & 1).astype(np.float64)
    approx = (bits @ (n * n * v)) / (bits @ n) ** 2
    # Screen with the vectorised values, then settle near-ties exactly.
    lo = approx.min()
    near = masks[approx <= lo + 1e-9 * max(abs(lo), 1e-300)]
    best_key, best_index = None, None
    for m in near.tolist():
        index = tuple(j for j in range(J) if m >> j & 1)
        key = (subset_variance(reports, index), -len(index), index)
        if best_key is None or key < best_key:
            best_key, best_index = key, index
    return _combine(reports, best_index, "mvagg")


def agg_all(reports: Sequence[PrivateSiteReport]) -> AggregationResult:
    _check(reports)
    return _combine(reports, range(len(reports)), "all")


def agg_largest(reports: Sequence[PrivateSiteReport]) -> AggregationResult:
    _check(reports)
    sizes = [r.n for r in reports]
    return _combine(reports, [sizes.index(max(sizes))], "largest")


AGGREGATORS = {"mvagg": mvagg, "all": agg_all, "largest": agg_largest}


def aggregate(method: str, reports: Sequence[PrivateSiteReport]) -> AggregationResult:
    try:
        fn = AGGREGATORS[method]
    except KeyError:
        raise ValueError(f"unknown aggregation method {method!r}") from None
    return fn(reports)
