import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fedate.aggregation import agg_all
from fedate.core import PrivacyBudget, SiteDataset, save_csv
from fedate.errors import ConfigError, InvalidJ, InvalidParams, TooFewRecords
from fedate.estimators import diff_in_means, dp_diff_in_means
from fedate.mechanisms import RandomStream, ZeroNoiseStream
from fedate.sim import (
    DEFAULT_ALPHAS,
    ExperimentConfig,
    MaeTable,
    SynthParams,
    epsilon_schedule,
    generate_synth,
    run_experiment,
    sigmoid,
    split_sites,
    split_sizes,
)


def test_sigmoid_values():
    assert sigmoid(0.0) == 0.5
    assert sigmoid(1.0) == pytest.approx(0.7311, abs=1e-4)
    assert sigmoid(-1.0) == pytest.approx(0.2689, abs=1e-4)


def test_synth_balanced_assignment_and_bounds():
    ds = generate_synth(SynthParams(n=20000, domain_size=10, a=0.0, b=0.4, tau=0.5), RandomStream(0))
    assert ds.n == 20000 and ds.B == 1.0 and ds.domain_size == 10
    assert ds.w.mean() == pytest.approx(0.5, abs=0.02)
    assert ds.y.min() >= 0 and ds.y.max() <= 1
    assert set(np.unique(ds.x)) == set(range(10))


def test_synth_outcome_model():
    ds = generate_synth(SynthParams(n=5000, domain_size=5, a=1.0, b=0.2, tau=0.5), RandomStream(1))
    xv = ds.x / 4
    e = ds.y - 0.2 * xv - 0.5 * ds.w
    assert e.min() >= 0 and e.max() < 0.1
    top = ds.x == 4
    assert ds.w[top].mean() == pytest.approx(sigmoid(1.0), abs=0.05)
    assert ds.w[ds.x == 0].mean() == pytest.approx(sigmoid(-1.0), abs=0.05)


def test_synth_extreme_outcome_reaches_one():
    assert 0.4 * 1 + 0.5 * 1 + 0.1 == pytest.approx(1.0)


@pytest.mark.parametrize("params", [
    SynthParams(n=0), SynthParams(domain_size=1), SynthParams(b=0.6), SynthParams(a="sometimes"),
])
def test_synth_rejects_bad_params(params):
    with pytest.raises(InvalidParams):
        generate_synth(params, RandomStream(0))


def test_synth_is_deterministic():
    p = SynthParams(n=100, domain_size=4)
    a, b = generate_synth(p, RandomStream(9, ("d",))), generate_synth(p, RandomStream(9, ("d",)))
    assert a.records == b.records


def test_split_sizes_examples():
    assert split_sizes(10000, [1, 1]) == [5000, 5000]
    assert split_sizes(20, [18, 1, 1]) == [18, 1, 1]
    assert split_sizes(10, [1, 1, 1]) == [4, 3, 3]
    with pytest.raises(TooFewRecords):
        split_sizes(3, [1, 1, 1, 1])


@given(st.integers(1, 500), st.lists(st.integers(1, 20), min_size=1, max_size=6), st.integers(0, 99))
def test_split_is_a_partition(n, props, seed):
    ds = SiteDataset(np.zeros(n, int), np.arange(n) / n, np.zeros(n, int))
    total = sum(props)
    rest = [math.floor(n * p / total + 0.5) for p in props[1:]]
    if min([n - sum(rest)] + rest) < 1:
        with pytest.raises(TooFewRecords):
            split_sites(ds, props, RandomStream(seed))
        return
    sites = split_sites(ds, props, RandomStream(seed))
    ys = np.sort(np.concatenate([s.y for s in sites]))
    assert np.array_equal(ys, ds.y)
    for s, p in zip(sites[1:], props[1:]):
        assert abs(s.n - n * p / total) <= 0.5
    assert [s.site_id for s in sites] == [str(j + 1) for j in range(len(props))]


def test_epsilon_schedule_examples():
    assert epsilon_schedule(1.0, 2, 8.0) == [1.0, 8.0]
    assert epsilon_schedule(1.0, 3, 4.0) == pytest.approx([1.0, 2.0, 4.0])
    assert epsilon_schedule(0.7, 5, 1.0) == [0.7] * 5
    with pytest.raises(InvalidJ):
        epsilon_schedule(1.0, 1, 2.0)


def small_config(**kw):
    base = dict(estimator="diff-in-means", repetitions=5, seed=3,
                synth=SynthParams(n=400, domain_size=5, a=0.0))
    base.update(kw)
    return ExperimentConfig(**base)


def test_experiment_table_shape_and_values():
    table = run_experiment(small_config())
    assert len(table.rows) == len(DEFAULT_ALPHAS) * 3
    for r in table.rows:
        assert r.repetitions == 5
        assert r.mean_mae >= 0 and r.std_mae >= 0
        assert math.isfinite(r.mean_mae) and math.isfinite(r.std_mae)
    lines = table.to_csv().splitlines()
    assert lines[0] == "aggregator,alpha,mean_mae,std_mae,repetitions"
    assert len(lines) == 22


def test_experiment_is_byte_deterministic():
    cfg = small_config(repetitions=1)
    assert run_experiment(cfg).to_csv() == run_experiment(cfg).to_csv()


def test_experiment_parallel_matches_serial():
    cfg = small_config(repetitions=4, alphas=[1.0, 8.0])
    serial = run_experiment(cfg).to_csv()
    cfg.workers = 2
    assert run_experiment(cfg).to_csv() == serial


def test_zero_noise_all_sites_equals_pooled_discrepancy(tmp_path):
    pooled = generate_synth(SynthParams(n=300, domain_size=3, a=0.0), RandomStream(4))
    path = tmp_path / "pooled.csv"
    save_csv(pooled, path)
    cfg = ExperimentConfig(estimator="diff-in-means", aggregators=["all"], alphas=[1.0],
                           repetitions=3, seed=5, synth=None, csv_path=str(path),
                           zero_noise=True)
    table = run_experiment(cfg)
    sites = split_sites(pooled, [1, 1], RandomStream(5, ("split",)))
    reports = [dp_diff_in_means(s, PrivacyBudget(1.0, 1e-5), ZeroNoiseStream(0)) for s in sites]
    expected = abs(agg_all(reports).tau_final - diff_in_means(pooled))
    row = table.get("all", 1.0)
    assert row.mean_mae == expected and row.std_mae == 0.0


def test_config_json_round_trip(tmp_path):
    cfg = small_config()
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg.to_dict()))
    back = ExperimentConfig.load(p)
    assert back.to_dict() == cfg.to_dict()


def test_config_csv_source_is_relative_to_file(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"estimator": "diff-in-means", "data": {"csv": {"path": "d.csv"}}}))
    assert ExperimentConfig.load(p).csv_path == str(tmp_path / "d.csv")


@pytest.mark.parametrize("d", [
    {"estimator": "ipw"},
    {"J": 3},
    {"repetitions": 0},
    {"bogus": 1},
    {"data": {"synth": {"n": 10, "bad": 1}}},
    {"data": {"parquet": {}}},
    {"aggregators": ["median"]},
])
def test_config_validation(d):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(d)


def test_config_rejects_malformed_json(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text("{")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(p)


def test_mae_table_lookup():
    table = MaeTable(())
    with pytest.raises(KeyError):
        table.get("mvagg", 1.0)
