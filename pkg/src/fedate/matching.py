"""Balanced exact matching and its sensitivity analysis.

The matching pairs the j-th treated record of a stratum with control
``j mod |C_x|`` and vice versa, so every record is reused at most
``ceil(other side / own side)`` times. All sensitivity quantities below depend
on the data only through the per-stratum counts ``(t, c)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SiteDataset, StratumCounts
from .mechanisms import SmoothSensitivityValue


@dataclass(frozen=True, eq=False)
class MatchingResult:
    tau_hat: float
    multiplicities: np.ndarray  # L_i: times record i's outcome is imputed for someone else
    y1: np.ndarray
    y0: np.ndarray

    @property
    def effects(self) -> np.ndarray:
        return self.y1 - self.y0


def match_and_estimate(dataset: SiteDataset) -> MatchingResult:
    n = dataset.n
    y = dataset.y
    y1 = y.copy()
    y0 = y.copy()
    L = np.zeros(n, dtype=np.int64)
    order = np.argsort(dataset.x, kind="stable")
    xs = dataset.x[order]
    bounds = np.flatnonzero(np.diff(xs)) + 1
    for members in np.split(order, bounds):
        if members.size == 0:
            continue
        w = dataset.w[members]
        T = members[w == 1]
        C = members[w == 0]
        t, c = T.size, C.size
        if t == 0 or c == 0:
            continue
        mt = C[np.arange(t) % c]
        mc = T[np.arange(c) % t]
        y0[T] = y[mt]
        y1[C] = y[mc]
        np.add.at(L, mt, 1)
        np.add.at(L, mc, 1)
    tau = float(np.sum(y1 - y0) / n) if n else 0.0
    return MatchingResult(tau, L, y1, y0)


def _cdiv(a, b):
    return -(-a // b)


def local_sensitivity_bound(counts: StratumCounts, B: float) -> float:
    """Upper bound on the replacement local sensitivity of the matching estimate."""
    _, t, c = counts.arrays()
    if counts.n == 0 or t.size == 0:
        return 0.0
    one_side = (t == 0) | (c == 0)
    ts = np.maximum(t, 1)
    cs = np.maximum(c, 1)
    r = np.where(one_side, np.maximum(t, c),
                 np.maximum(_cdiv(1 + c, ts), _cdiv(1 + t, cs)))
    return float(4.0 * (1 + r.max()) * B / counts.n)


def r_k(t: int, c: int, k: int) -> int:
    if t == 0 and c == 0:
        return k
    hi, lo = max(t, c), min(t, c)
    if lo <= k:
        return hi + k
    return _cdiv(hi + k + 1, lo - k)


@dataclass(frozen=True)
class SensitivityBound:
    local_bound: float
    smooth: SmoothSensitivityValue
    argmax_k: int
    argmax_stratum: int | None  # None when an unoccupied code attains the max


def _rk_matrix(hi, lo, ks):
    k = ks[:, None]
    linear = lo[None, :] <= k
    den = np.where(linear, 1, lo[None, :] - k)
    return np.where(linear, hi[None, :] + k, _cdiv(hi[None, :] + k + 1, den))


def tau_sensitivity(counts: StratumCounts, B: float, beta: float) -> SensitivityBound:
    """Smooth upper bound max_k e^{-k beta} (4B/N)(1 + max_x R_x^(k)).

    Once every stratum is in its linear regime (k >= min(t, c)) the term is
    ``e^{-k beta}(1 + M + k)`` with ``M`` the largest arm count, whose maximum
    over the remaining k has a closed form. k is not truncated at N; see
    ``tests/test_matching.py::test_smoothness_needs_terms_beyond_n``.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    codes, t, c = counts.arrays()
    n = counts.n
    hi = np.maximum(t, c)
    lo = np.minimum(t, c)
    big = int(hi.max())
    k_lin = int(lo.max())  # from here on every R is hi + k

    best, best_k, best_x = -1.0, 0, None
    chunk = max(1, 2_000_000 // max(1, codes.size))
    for start in range(0, k_lin, chunk):
        ks = np.arange(start, min(k_lin, start + chunk), dtype=np.int64)
        R = _rk_matrix(hi, lo, ks)
        col = R.argmax(axis=1)
        rmax = R[np.arange(ks.size), col]
        absent = counts.has_absent & (ks > rmax)
        rmax = np.where(absent, ks, rmax)
        vals = np.exp(-ks * beta) * (1 + rmax)
        i = int(vals.argmax())
        if vals[i] > best:
            best, best_k = float(vals[i]), int(ks[i])
            best_x = None if absent[i] else int(codes[col[i]])

    # Linear regime: g(k) = e^{-k beta}(1 + big + k) peaks at k* = 1/beta - 1 - big.
    k_star = 1.0 / beta - 1 - big
    cands = {k_lin}
    if k_star > k_lin:
        cands.update({int(math.floor(k_star)), int(math.ceil(k_star))})
    x_big = int(codes[int(hi.argmax())])
    for k in sorted(cands):
        v = math.exp(-k * beta) * (1 + big + k)
        if v > best:
            best, best_k, best_x = v, k, x_big

    scale = 4.0 * B / n
    return SensitivityBound(local_sensitivity_bound(counts, B),
                            SmoothSensitivityValue(scale * best, beta), best_k, best_x)


def smooth_sensitivity_tau(counts: StratumCounts, B: float, beta: float) -> SmoothSensitivityValue:
    return tau_sensitivity(counts, B, beta).smooth


def variance_estimate_matching(dataset: SiteDataset, matching: MatchingResult) -> float:
    n = dataset.n
    d = matching.effects
    return float(np.sum((1 + matching.multiplicities) ** 2 * d * d) / (2.0 * n * n))


# --- variance local sensitivity, in units of B^2 and before the 1/(2N^2) factor ---

def _ls_plus(T, C):
    """Bound on |g(D) - g(D + one record)| for a stratum with counts (T, C)."""
    T = np.asarray(T, dtype=np.int64)
    C = np.asarray(C, dtype=np.int64)
    Ts = np.maximum(T, 1)
    Cs = np.maximum(C, 1)
    both = (2 * T * (1 + _cdiv(C, Ts)) ** 2 + 2 * C * (1 + _cdiv(T + 1, Cs)) ** 2
            + (1 + _cdiv(C, T + 1)) ** 2)
    both = np.maximum(both, 2 * C * (1 + _cdiv(T, Cs)) ** 2 + 2 * T * (1 + _cdiv(C + 1, Ts)) ** 2
                      + (1 + _cdiv(T, C + 1)) ** 2)
    m = np.maximum(T, C)
    one = (1 + m) ** 2 + 4 * m
    out = np.where((T > 0) & (C > 0), both, one)
    return np.where((T == 0) & (C == 0), 0, out)


def _ls_minus_after_add(T, C):
    """Largest removal sensitivity over datasets that add one record to (T, C)."""
    T = np.asarray(T, dtype=np.int64)
    C = np.asarray(C, dtype=np.int64)
    Ts = np.maximum(T, 1)
    Cs = np.maximum(C, 1)
    e1 = (2 * (1 + C) * (1 + _cdiv(1 + T, Cs)) ** 2 + 2 * (1 + T) * (1 + _cdiv(1 + C, 1 + T)) ** 2
          + (1 + _cdiv(1 + T, Cs)) ** 2)
    e2 = (2 * (2 + T) * (1 + _cdiv(C, 1 + T)) ** 2 + 2 * C * (1 + _cdiv(2 + T, Cs)) ** 2
          + (1 + _cdiv(C, 1 + T)) ** 2)
    e3 = (2 * (1 + T) * (1 + _cdiv(1 + C, Ts)) ** 2 + 2 * (1 + C) * (1 + _cdiv(1 + T, 1 + C)) ** 2
          + (1 + _cdiv(1 + C, Ts)) ** 2)
    e4 = (2 * (2 + C) * (1 + _cdiv(T, 1 + C)) ** 2 + 2 * T * (1 + _cdiv(2 + C, Ts)) ** 2
          + (1 + _cdiv(T, 1 + C)) ** 2)
    both = np.maximum(np.maximum(e1, e2), np.maximum(e3, e4))
    m = np.maximum(T, C)
    ms = np.maximum(m, 1)
    # One arm empty: the added record must open the other arm (a (1, m) stratum).
    one = np.maximum(8 * (1 + m) + 2 * (2 + m) ** 2 + 4,
                     4 * (1 + m) ** 2 + 2 * m * (1 + _cdiv(2, ms)) ** 2 + (1 + m) ** 2)
    out = np.where((T > 0) & (C > 0), both, one)
    return np.where((T == 0) & (C == 0), 0, out)


def variance_envelope(m):
    """Upper bound on ``_ls_plus + _ls_minus_after_add`` over strata with T + C <= m."""
    return 18 * (np.asarray(m, dtype=np.float64) + 3) ** 2


def variance_local_sensitivity_bound(counts: StratumCounts, B: float) -> float:
    _, t, c = counts.arrays()
    n = counts.n
    total = int(_ls_plus(t, c).max()) + int(_ls_minus_after_add(t, c).max())
    return float(B * B * total / (2.0 * n * n))


def _hex_cost(dt, dc):
    """Replacements needed to move a stratum's counts by (dt, dc)."""
    up = np.maximum(dt, 0) + np.maximum(dc, 0)
    down = np.maximum(-dt, 0) + np.maximum(-dc, 0)
    return np.maximum(up, down)


def _reachable_maxima(seeds, n: int, K: int):
    """Running maxima over k = 0..K of both LS pieces across counts reachable within k.

    A count pair is reachable within k if some seed stratum gets there in at
    most k replacements while holding no more than ``n`` records. Distances
    are taken to the nearest seed over one shared grid.
    """
    a = np.array([s[0] for s in seeds], dtype=np.int64)
    b = np.array([s[1] for s in seeds], dtype=np.int64)
    T = np.arange(0, min(n, int(a.max()) + K) + 1, dtype=np.int64)[:, None]
    C = np.arange(0, min(n, int(b.max()) + K) + 1, dtype=np.int64)[None, :]
    dist = np.full((T.size, C.size), K + 1, dtype=np.int64)
    for t, c in zip(a.tolist(), b.tolist()):
        np.minimum(dist, _hex_cost(T - t, C - c), out=dist)
    ok = (dist <= K) & (T + C <= n)
    h = dist[ok]
    Tg = np.broadcast_to(T, ok.shape)[ok]
    Cg = np.broadcast_to(C, ok.shape)[ok]
    plus = np.full(K + 1, -1, dtype=np.int64)
    minus = np.full(K + 1, -1, dtype=np.int64)
    np.maximum.at(plus, h, _ls_plus(Tg, Cg))
    np.maximum.at(minus, h, _ls_minus_after_add(Tg, Cg))
    return np.maximum.accumulate(plus), np.maximum.accumulate(minus)


def smooth_sensitivity_variance(counts: StratumCounts, B: float, beta: float) -> SmoothSensitivityValue:
    """Smooth upper bound on the local sensitivity of the matching variance estimate.

    For each k, the two LS pieces are maximised separately over every stratum's
    counts reachable within k replacements (unoccupied codes start from (0, 0)).
    k grows by doubling until an envelope bound shows later terms cannot win.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    _, t, c = counts.arrays()
    n = counts.n
    seeds = sorted(set(zip(t.tolist(), c.tolist())))
    if counts.has_absent:
        seeds.append((0, 0))
    n_max = max(a + b for a, b in seeds)
    K = min(n, 32)
    while True:
        plus, minus = _reachable_maxima(seeds, n, K)
        ks = np.arange(K + 1)
        best = float(np.max(np.exp(-ks * beta) * (plus + minus)))
        if K >= n:
            break
        tail_k = np.arange(K + 1, n + 1)
        tail = np.exp(-tail_k * beta) * variance_envelope(np.minimum(n, n_max + tail_k))
        if tail.max() <= best:
            break
        K = min(n, 2 * K)
    return SmoothSensitivityValue(B * B * best / (2.0 * n * n), beta)
