import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fedate.core import SiteDataset, StratumCounts, stratify
from fedate.matching import (
    _hex_cost,
    _ls_minus_after_add,
    _ls_plus,
    _reachable_maxima,
    local_sensitivity_bound,
    match_and_estimate,
    r_k,
    smooth_sensitivity_tau,
    smooth_sensitivity_variance,
    tau_sensitivity,
    variance_estimate_matching,
    variance_local_sensitivity_bound,
)
from fedate.oracles import (
    brute_force_local_sensitivity,
    build_corpus,
    corpus_local_sensitivity,
    reference_matching,
    smoothness_violations,
)

from conftest import datasets

GRID = (0.0, 0.5, 1.0)


def tau_of(ds):
    return match_and_estimate(ds).tau_hat


def var_of(ds):
    return variance_estimate_matching(ds, match_and_estimate(ds))


def counts(pairs, domain_size=None):
    return StratumCounts.from_pairs(pairs, domain_size)


# --- the estimator ---

def test_single_pair(pair):
    m = match_and_estimate(pair)
    assert m.tau_hat == pytest.approx(0.6)
    assert m.multiplicities.tolist() == [1, 1]
    assert variance_estimate_matching(pair, m) == pytest.approx(0.36)


def test_unmatched_record_contributes_nothing():
    ds = SiteDataset.from_records([(1, 0.7, 0)])
    m = match_and_estimate(ds)
    assert m.tau_hat == 0.0 and m.multiplicities.tolist() == [0]
    assert variance_estimate_matching(ds, m) == 0.0


def test_three_treated_one_control(witness4):
    m = match_and_estimate(witness4)
    assert m.tau_hat == 1.0
    assert m.multiplicities.tolist() == [1, 0, 0, 3]
    assert variance_estimate_matching(witness4, m) == pytest.approx(0.6875)


def test_matching_follows_record_order():
    ds = SiteDataset.from_records([(0, 0.1, 0), (1, 0.9, 0), (0, 0.3, 0), (0, 0.5, 0)])
    m = match_and_estimate(ds)
    # the single treated record is imputed from the first control
    assert m.y0[1] == 0.1
    assert m.multiplicities.tolist() == [1, 3, 0, 0]


@given(datasets(max_n=30, max_domain=4))
def test_agrees_with_loop_reference(ds):
    tau, var = reference_matching(ds.records)
    m = match_and_estimate(ds)
    assert m.tau_hat == pytest.approx(tau, abs=1e-12)
    assert variance_estimate_matching(ds, m) == pytest.approx(var, abs=1e-12)


@given(datasets(max_n=40, max_domain=4))
def test_multiplicities_are_balanced(ds):
    m = match_and_estimate(ds)
    s = stratify(ds)
    for x, (t, c) in s.counts.items():
        treated = (ds.x == x) & (ds.w == 1)
        control = (ds.x == x) & (ds.w == 0)
        if t == 0 or c == 0:
            members = treated | control
            assert (m.multiplicities[members] == 0).all()
            assert np.array_equal(m.y1[members], ds.y[members])
            assert np.array_equal(m.y0[members], ds.y[members])
            continue
        L_t = m.multiplicities[treated]
        L_c = m.multiplicities[control]
        assert L_t.min() >= c // t and L_t.max() <= -(-c // t)
        assert L_c.min() >= t // c and L_c.max() <= -(-t // c)
        assert L_t.max() - L_t.min() <= 1 and L_c.max() - L_c.min() <= 1
    assert abs(m.tau_hat) <= ds.B
    assert m.tau_hat == pytest.approx(np.mean(m.y1 - m.y0))


@given(datasets(max_n=20))
def test_deterministic(ds):
    a, b = match_and_estimate(ds), match_and_estimate(ds)
    assert a.tau_hat == b.tau_hat and np.array_equal(a.multiplicities, b.multiplicities)


# --- the point-estimate bounds ---

def test_local_bound_examples():
    assert local_sensitivity_bound(counts({0: (2, 2)}), 1.0) == pytest.approx(3.0)
    assert local_sensitivity_bound(counts({0: (3, 0)}), 1.0) == pytest.approx(16 / 3)
    for n in (1, 10, 100, 1000):
        assert local_sensitivity_bound(counts({0: (n, n)}), 1.0) * 2 * n <= 4 * 3 + 1e-9


def test_r_k_examples():
    assert r_k(2, 2, 0) == 2
    assert r_k(2, 2, 3) == 5
    assert r_k(0, 0, 7) == 7
    assert r_k(5, 3, 1) == math.ceil((5 + 1 + 1) / (3 - 1))


def test_smooth_tau_small_stratum_terms():
    beta = 0.1
    s = tau_sensitivity(counts({0: (2, 2)}), 1.0, beta)
    terms = [math.exp(-k * beta) * (1 + r_k(2, 2, k)) for k in range(40)]
    assert [round(v, 3) for v in terms[:5]] == [3.0, 4.524, 4.094, 4.445, 4.692]
    # the envelope keeps growing past k = N and peaks at k = 7
    assert s.argmax_k == 7 == int(np.argmax(terms))
    assert s.smooth.value == pytest.approx(10 * math.exp(-0.7), rel=1e-12)
    assert s.smooth.value == pytest.approx(4.96585, abs=1e-5)
    assert smooth_sensitivity_tau(counts({0: (2, 2)}), 1.0, 1.0).value == pytest.approx(3.0)


def test_smoothness_needs_terms_beyond_n():
    """Cutting the max at k = N breaks the e^beta ratio between neighbours."""
    beta = 0.04096
    d = counts({1: (0, 2)}, domain_size=2)
    d_nb = counts({1: (1, 1)}, domain_size=2)  # one control replaced by a treated record

    def truncated(cs):
        return max(math.exp(-k * beta) * 4 / cs.n
                   * (1 + max(r_k(*cs.counts.get(x, (0, 0)), k) for x in range(cs.domain_size)))
                   for k in range(cs.n + 1))

    assert truncated(d) > math.exp(beta) * truncated(d_nb)
    full, full_nb = (smooth_sensitivity_tau(c, 1.0, beta).value for c in (d, d_nb))
    assert full <= math.exp(beta) * full_nb * (1 + 1e-12)
    assert full_nb <= math.exp(beta) * full * (1 + 1e-12)


def test_absent_codes_raise_the_bound():
    present = smooth_sensitivity_tau(counts({0: (3, 3)}, 1), 1.0, 0.05).value
    absent = smooth_sensitivity_tau(counts({0: (3, 3)}, 5), 1.0, 0.05).value
    assert absent >= present


def brute_smooth_tau(cs, B, beta, k_max=5000):
    """Direct evaluation of the envelope over a long explicit k range."""
    best = 0.0
    for k in range(k_max):
        rs = [r_k(*cs.counts.get(x, (0, 0)), k) for x in range(cs.domain_size)]
        best = max(best, math.exp(-k * beta) * 4 * B / cs.n * (1 + max(rs)))
    return best


@given(st.dictionaries(st.integers(0, 4), st.tuples(st.integers(0, 12), st.integers(0, 12)),
                       min_size=1, max_size=5),
       st.sampled_from([0.01, 0.04096, 0.2, 0.5, 2.0]))
def test_closed_form_tail_matches_direct_scan(pairs, beta):
    cs = counts(pairs, domain_size=5)
    if cs.n == 0:
        return
    assert smooth_sensitivity_tau(cs, 1.0, beta).value == pytest.approx(
        brute_smooth_tau(cs, 1.0, beta), rel=1e-12)


@given(st.dictionaries(st.integers(0, 3), st.tuples(st.integers(0, 30), st.integers(0, 30)),
                       min_size=1, max_size=4),
       st.floats(0.001, 3.0), st.floats(0.1, 10.0))
def test_smooth_tau_dominates_local_and_scales_with_B(pairs, beta, B):
    cs = counts(pairs, domain_size=4)
    if cs.n == 0:
        return
    s = tau_sensitivity(cs, 1.0, beta)
    assert s.smooth.value >= s.local_bound * (1 - 1e-12)
    assert smooth_sensitivity_tau(cs, B, beta).value == pytest.approx(B * s.smooth.value, rel=1e-12)


@given(datasets(max_n=6, max_domain=2, grid=GRID))
def test_local_bound_dominates_brute_force(ds):
    assert brute_force_local_sensitivity(ds, tau_of, GRID) <= \
        local_sensitivity_bound(stratify(ds), ds.B) + 1e-12


# --- the variance estimate ---

def test_variance_local_bound_is_k0_term():
    for pairs in ({0: (1, 1)}, {0: (3, 0)}, {0: (2, 5), 1: (0, 4)}):
        cs = counts(pairs)
        huge_beta = smooth_sensitivity_variance(cs, 1.0, 50.0).value
        assert huge_beta == pytest.approx(variance_local_sensitivity_bound(cs, 1.0), rel=1e-12)


def test_variance_one_sided_strata_use_empty_side_cases():
    cs = counts({0: (3, 0), 1: (0, 2)})
    m = np.array([3, 2])
    plus = (1 + m) ** 2 + 4 * m
    minus = np.maximum(8 * (1 + m) + 2 * (2 + m) ** 2 + 4,
                       4 * (1 + m) ** 2 + 2 * m * (1 + np.ceil(2 / m)) ** 2 + (1 + m) ** 2)
    expected = (plus.max() + minus.max()) / (2 * cs.n**2)
    assert variance_local_sensitivity_bound(cs, 1.0) == pytest.approx(expected)


def test_variance_bound_single_pair_and_scaling():
    cs = counts({0: (1, 1)})
    v = variance_local_sensitivity_bound(cs, 1.0)
    assert v > 0
    assert variance_local_sensitivity_bound(cs, 2.0) == pytest.approx(4 * v)
    s = smooth_sensitivity_variance(cs, 1.0, 0.5)
    assert s.value == pytest.approx(11.375)
    assert smooth_sensitivity_variance(cs, 2.0, 0.5).value == pytest.approx(4 * s.value)
    # N * bound stays bounded for balanced single strata
    scaled = [variance_local_sensitivity_bound(counts({0: (n, n)}), 1.0) * 2 * n for n in range(1, 65)]
    assert max(scaled[8:]) <= scaled[8] * 1.01


def reachable_by_search(seeds, n, K):
    """Per-k maxima by breadth-first search over count pairs."""
    moves = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)]
    dist = {s: 0 for s in seeds}
    frontier = list(seeds)
    for k in range(1, K + 1):
        nxt = []
        for t, c in frontier:
            for dt, dc in moves:
                p = (t + dt, c + dc)
                if p[0] >= 0 and p[1] >= 0 and p[0] + p[1] <= n and p not in dist:
                    dist[p] = k
                    nxt.append(p)
        frontier = nxt
    plus = [max(int(_ls_plus(t, c)) for (t, c), d in dist.items() if d <= k) for k in range(K + 1)]
    minus = [max(int(_ls_minus_after_add(t, c)) for (t, c), d in dist.items() if d <= k)
             for k in range(K + 1)]
    return plus, minus


@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=1, max_size=4, unique=True),
       st.integers(0, 8))
def test_reachable_maxima_match_graph_search(seeds, K):
    n = max(12, max(t + c for t, c in seeds))
    plus, minus = _reachable_maxima(seeds, n, K)
    exp_plus, exp_minus = reachable_by_search(seeds, n, K)
    assert plus.tolist() == exp_plus and minus.tolist() == exp_minus


def test_hex_cost_is_replacement_distance():
    assert _hex_cost(1, -1) == 1
    assert _hex_cost(1, 1) == 2
    assert _hex_cost(-2, 0) == 2
    assert _hex_cost(3, -1) == 3


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_variance_bounds_on_exhaustive_corpus(n):
    level = build_corpus(n, 2)
    ls = corpus_local_sensitivity(level, level.var)
    bound = np.array([variance_local_sensitivity_bound(c, 1.0) for c in level.counts])[level.signature]
    assert (ls <= bound + 1e-12).all()
    for beta in (0.04096, 0.5):
        s = np.array([smooth_sensitivity_variance(c, 1.0, beta).value
                      for c in level.counts])[level.signature]
        assert (s >= ls - 1e-12).all()
        assert smoothness_violations(level, s, beta) == 0


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_tau_bounds_on_exhaustive_corpus(n):
    level = build_corpus(n, 2)
    ls = corpus_local_sensitivity(level, level.tau)
    bound = np.array([local_sensitivity_bound(c, 1.0) for c in level.counts])[level.signature]
    assert (ls <= bound + 1e-12).all()
