"""Brute-force oracles for the sensitivity bounds and the subset search.

Everything here is deliberately naive and written without reference to the
optimised code paths it is used to check. The neighbour relation is record
replacement at fixed N.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import SiteDataset, StratumCounts
from .errors import TooLarge

MAX_EVALUATIONS = 100_000
DEFAULT_GRID = (0.0, 0.5, 1.0)


def _record_space(domain_size, grid):
    return [(w, y, x) for x in range(domain_size) for w in (0, 1) for y in grid]


def _with_record(dataset: SiteDataset, i: int, rec) -> SiteDataset:
    w, y, x = dataset.w.copy(), dataset.y.copy(), dataset.x.copy()
    w[i], y[i], x[i] = rec
    return SiteDataset(w, y, x, dataset.B, dataset.domain_size, dataset.site_id)


def brute_force_local_sensitivity(dataset: SiteDataset, f: Callable[[SiteDataset], float],
                                  value_grid: Sequence[float] = DEFAULT_GRID) -> float:
    """Exact max |f(D) - f(D')| over every single-record replacement drawn from the grid."""
    space = _record_space(dataset.domain_size, value_grid)
    if dataset.n * len(space) > MAX_EVALUATIONS:
        raise TooLarge(f"{dataset.n * len(space)} neighbours exceed {MAX_EVALUATIONS}")
    base = f(dataset)
    best = 0.0
    for i in range(dataset.n):
        for rec in space:
            best = max(best, abs(base - f(_with_record(dataset, i, rec))))
    return best


def brute_force_smooth_sensitivity(dataset: SiteDataset, f, beta: float,
                                   value_grid: Sequence[float] = DEFAULT_GRID,
                                   radius: int = 1) -> float:
    """max over D' within Hamming ``radius`` of LS_f(D') e^{-beta d(D, D')}."""
    space = _record_space(dataset.domain_size, value_grid)
    n = dataset.n
    if not 0 <= radius <= n:
        raise TooLarge(f"radius must lie in [0, {n}], got {radius}")
    count = sum(math.comb(n, d) * (len(space) - 1) ** d for d in range(radius + 1))
    if count * n * len(space) > 20 * MAX_EVALUATIONS:
        raise TooLarge(f"{count} datasets within radius {radius} is too many")
    original = dataset.records
    best = 0.0
    for d in range(radius + 1):
        for pos in itertools.combinations(range(n), d):
            choices = [[r for r in space if r != tuple(original[i])] for i in pos]
            for recs in itertools.product(*choices):
                other = dataset
                for i, rec in zip(pos, recs):
                    other = _with_record(other, i, rec)
                ls = brute_force_local_sensitivity(other, f, value_grid)
                best = max(best, ls * math.exp(-beta * d))
    return best


def unit_jump_dataset(n: int, B: float = 1.0) -> SiteDataset:
    """n-1 treated records at Y=B and one control at Y=0, all in one stratum.

    Flipping the control to a treated record at Y=0 moves the matching
    estimate from B to 0.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    w = np.r_[np.ones(n - 1, dtype=np.int64), 0]
    y = np.r_[np.full(n - 1, float(B)), 0.0]
    return SiteDataset(w, y, np.zeros(n, dtype=np.int64), B=B, domain_size=1)


# --- a second, loop-based implementation of the matching estimator ---

def reference_matching(records, n=None):
    """(tau_hat, variance estimate) by the textbook loop, on ``(w, y, x)`` tuples."""
    n = len(records) if n is None else n
    strata = {}
    for i, (w, _, x) in enumerate(records):
        strata.setdefault(x, ([], []))[0 if w == 1 else 1].append(i)
    y1 = [r[1] for r in records]
    y0 = [r[1] for r in records]
    uses = [0] * n
    for T, C in strata.values():
        if not T or not C:
            continue
        for j, i in enumerate(T):
            partner = C[j % len(C)]
            y0[i] = records[partner][1]
            uses[partner] += 1
        for j, i in enumerate(C):
            partner = T[j % len(T)]
            y1[i] = records[partner][1]
            uses[partner] += 1
    tau = sum(a - b for a, b in zip(y1, y0)) / n
    var = sum((1 + L) ** 2 * (a - b) ** 2 for L, a, b in zip(uses, y1, y0)) / (2.0 * n * n)
    return tau, var


# --- exhaustive corpus, indexed so that neighbours are integer offsets ---

@dataclass(frozen=True)
class CorpusLevel:
    """All ordered datasets of ``n`` records over ``space``.

    Dataset ``k`` holds record ``space[digits[k, i]]`` at position ``i`` where
    ``k = sum_i digits[k, i] * V**i``, so replacing position ``i`` by value ``v``
    lands on ``k + (v - digits[k, i]) * V**i``.
    """

    n: int
    domain_size: int
    space: tuple
    digits: np.ndarray
    tau: np.ndarray
    var: np.ndarray
    signature: np.ndarray  # per dataset, index into ``counts``
    counts: tuple  # distinct StratumCounts

    @property
    def size(self) -> int:
        return self.digits.shape[0]

    def neighbours(self):
        """Yield neighbour index arrays, one per (position, value) replacement."""
        V = len(self.space)
        idx = np.arange(self.size, dtype=np.int64)
        for i in range(self.n):
            for v in range(V):
                nb = idx + (v - self.digits[:, i]) * V**i
                yield nb

    def records(self, k):
        return [self.space[d] for d in self.digits[k]]


def build_corpus(n: int, domain_size: int, grid=DEFAULT_GRID) -> CorpusLevel:
    space = tuple(_record_space(domain_size, grid))
    V = len(space)
    size = V**n
    idx = np.arange(size, dtype=np.int64)
    digits = np.stack([(idx // V**i) % V for i in range(n)], axis=1)
    tau = np.empty(size)
    var = np.empty(size)
    for k in range(size):
        tau[k], var[k] = reference_matching([space[d] for d in digits[k]], n)
    # stratum counts as a code per dataset
    wx = np.array([[r[0], r[2]] for r in space])
    sig = np.zeros((size, domain_size, 2), dtype=np.int64)
    for i in range(n):
        w, x = wx[digits[:, i], 0], wx[digits[:, i], 1]
        np.add.at(sig, (idx, x, 1 - w), 1)
    flat = sig.reshape(size, -1)
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    counts = tuple(
        StratumCounts.from_pairs({x: (int(u[2 * x]), int(u[2 * x + 1])) for x in range(domain_size)
                                  if u[2 * x] + u[2 * x + 1] > 0}, domain_size)
        for u in uniq
    )
    return CorpusLevel(n, domain_size, space, digits, tau, var, inverse.ravel(), counts)


def corpus_local_sensitivity(level: CorpusLevel, values: np.ndarray) -> np.ndarray:
    ls = np.zeros(level.size)
    for nb in level.neighbours():
        np.maximum(ls, np.abs(values - values[nb]), out=ls)
    return ls


def corpus_smooth_sensitivity(level: CorpusLevel, ls: np.ndarray, beta: float) -> np.ndarray:
    """Exact max_{D'} LS(D') e^{-beta d(D, D')} over the corpus, by relaxing one hop at a time."""
    g = ls.copy()
    decay = math.exp(-beta)
    for _ in range(level.n):
        nxt = g.copy()
        for nb in level.neighbours():
            np.maximum(nxt, decay * g[nb], out=nxt)
        g = nxt
    return g


def smoothness_violations(level: CorpusLevel, s: np.ndarray, beta: float, rtol=1e-12) -> int:
    bound = math.exp(beta) * (1 + rtol)
    return int(sum(np.count_nonzero(s > bound * s[nb]) for nb in level.neighbours()))


# --- independent subset search for the aggregator ---

def enumerate_min_variance(ns: Sequence[int], variances: Sequence[float]):
    """Best (positions, variance) by listing subsets largest first, positions ascending."""
    best = None
    J = len(ns)
    for size in range(J, 0, -1):
        for subset in itertools.combinations(range(J), size):
            total = sum(ns[j] for j in subset)
            v = 0.0
            for j in subset:
                v += (ns[j] / total) ** 2 * variances[j]
            if best is None or v < best[1]:
                best = (subset, v)
    return best
