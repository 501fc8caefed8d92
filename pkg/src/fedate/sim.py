"""Synthetic data, site splits and the MAE experiment runner."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .aggregation import aggregate
from .core import PrivacyBudget, SiteDataset, load_csv, load_metadata
from .errors import ConfigError, InvalidJ, InvalidParams, TooFewRecords
from .estimators import EstimatorKind, estimate, non_private_estimate
from .mechanisms import RandomStream, ZeroNoiseStream

NOISE_AMPLITUDE = 0.1
DEFAULT_ALPHAS = (1 / 8, 1 / 4, 1 / 2, 1, 2, 4, 8)

Random = str  # the literal "random"


@dataclass(frozen=True)
class SynthParams:
    """Synthetic observational study: Y = b X + tau W + e, e ~ U[0, 0.1].

    ``a`` and ``b`` may be ``"random"``, in which case they are drawn once per
    dataset from U[-1, 1] and U[0, 0.4].
    """

    n: int = 10000
    domain_size: int = 100
    a: Union[float, Random] = "random"
    b: Union[float, Random] = "random"
    tau: float = 0.5

    def validate(self):
        if int(self.n) < 1:
            raise InvalidParams(f"n must be >= 1, got {self.n}")
        if int(self.domain_size) < 2:
            raise InvalidParams(f"domain_size must be >= 2, got {self.domain_size}")
        for name in ("a", "b"):
            v = getattr(self, name)
            if isinstance(v, str) and v != "random":
                raise InvalidParams(f"{name} must be a number or 'random', got {v!r}")
        b_max = 0.4 if self.b == "random" else float(self.b)
        if b_max < 0 or self.tau < 0 or b_max + self.tau + NOISE_AMPLITUDE > 1:
            raise InvalidParams("need b >= 0, tau >= 0 and b + tau + 0.1 <= 1 so that 0 <= Y <= 1")


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def generate_synth(params: SynthParams, rng: RandomStream, site_id="synth") -> SiteDataset:
    params.validate()
    g = rng.generator()
    a = g.uniform(-1.0, 1.0) if params.a == "random" else float(params.a)
    b = g.uniform(0.0, 0.4) if params.b == "random" else float(params.b)
    size = int(params.domain_size)
    x = g.integers(0, size, size=int(params.n))
    xv = x / (size - 1)
    w = (g.uniform(size=int(params.n)) < sigmoid(a * (2 * xv - 1))).astype(np.int64)
    e = g.uniform(0.0, NOISE_AMPLITUDE, size=int(params.n))
    y = np.minimum(b * xv + params.tau * w + e, 1.0)
    return SiteDataset(w, y, x, B=1.0, domain_size=size, site_id=site_id)


def split_sizes(n: int, proportions: Sequence[int]) -> list[int]:
    total = sum(proportions)
    if not proportions or total <= 0 or min(proportions) < 0:
        raise InvalidParams(f"bad proportions {proportions!r}")
    rest = [int(math.floor(n * p / total + 0.5)) for p in proportions[1:]]
    sizes = [n - sum(rest)] + rest
    if min(sizes) < 1:
        raise TooFewRecords(f"{n} records cannot fill {len(proportions)} sites as {proportions}")
    return sizes


def split_sites(dataset: SiteDataset, proportions: Sequence[int], rng: RandomStream) -> list[SiteDataset]:
    """Random disjoint partition; rounding remainders go to site 1."""
    sizes = split_sizes(dataset.n, proportions)
    perm = rng.generator().permutation(dataset.n)
    cuts = np.cumsum(sizes)[:-1]
    return [dataset.subset(idx, site_id=str(j + 1)) for j, idx in enumerate(np.split(perm, cuts))]


def epsilon_schedule(eps1: float, J: int, alpha: float) -> list[float]:
    if J < 2:
        raise InvalidJ(f"the schedule needs J >= 2, got {J}")
    if not (eps1 > 0 and alpha > 0):
        raise InvalidParams("eps1 and alpha must be positive")
    return [eps1 * alpha ** (j / (J - 1)) for j in range(J)]


@dataclass
class ExperimentConfig:
    estimator: str = EstimatorKind.DIFF_IN_MEANS.value
    aggregators: list = field(default_factory=lambda: ["mvagg", "all", "largest"])
    J: int = 2
    proportions: list = field(default_factory=lambda: [1, 1])
    eps1: float = 1.0
    delta: float = 1e-5
    alphas: list = field(default_factory=lambda: list(DEFAULT_ALPHAS))
    repetitions: int = 100
    seed: int = 0
    synth: SynthParams | None = field(default_factory=SynthParams)
    csv_path: str | None = None
    csv_B: float = 1.0
    csv_domain_size: int | None = None
    fixed_split: bool = True
    zero_noise: bool = False
    workers: int = 1

    def validate(self):
        try:
            EstimatorKind(self.estimator)
        except ValueError:
            raise ConfigError(f"unknown estimator {self.estimator!r}") from None
        for a in self.aggregators:
            if a not in ("mvagg", "all", "largest"):
                raise ConfigError(f"unknown aggregator {a!r}")
        if len(self.proportions) != self.J:
            raise ConfigError(f"proportions has {len(self.proportions)} entries, J = {self.J}")
        if self.J < 2:
            raise ConfigError("J must be >= 2")
        if int(self.repetitions) < 1:
            raise ConfigError("repetitions must be >= 1")
        if not self.alphas:
            raise ConfigError("alphas must be non-empty")
        if (self.synth is None) == (self.csv_path is None):
            raise ConfigError("give exactly one data source: synth or csv")
        if self.synth is not None:
            self.synth.validate()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        data = d.pop("data", {"synth": {}})
        known = {f for f in cls.__dataclass_fields__} - {"synth", "csv_path", "csv_B",
                                                         "csv_domain_size", "fixed_split"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        kwargs = dict(d)
        if "synth" in data:
            try:
                kwargs["synth"] = SynthParams(**data["synth"])
            except TypeError as exc:
                raise ConfigError(str(exc)) from None
        elif "csv" in data:
            src = data["csv"]
            kwargs.update(synth=None, csv_path=src["path"], csv_B=src.get("B", 1.0),
                          csv_domain_size=src.get("domain_size"),
                          fixed_split=src.get("fixed_split", True))
        else:
            raise ConfigError("data must contain 'synth' or 'csv'")
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        cfg = cls.from_dict(d)
        if cfg.csv_path is not None and not Path(cfg.csv_path).is_absolute():
            cfg.csv_path = str(Path(path).parent / cfg.csv_path)
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        synth = d.pop("synth")
        src = {k: d.pop(k) for k in ("csv_path", "csv_B", "csv_domain_size", "fixed_split")}
        if synth is not None:
            d["data"] = {"synth": synth}
        else:
            d["data"] = {"csv": {"path": src["csv_path"], "B": src["csv_B"],
                                 "domain_size": src["csv_domain_size"],
                                 "fixed_split": src["fixed_split"]}}
        return d


@dataclass(frozen=True)
class MaeRow:
    aggregator: str
    alpha: float
    mean_mae: float
    std_mae: float
    repetitions: int
    mean_predicted_variance: float
    realized_mse: float


@dataclass(frozen=True)
class MaeTable:
    rows: tuple[MaeRow, ...]

    CSV_COLUMNS = ("aggregator", "alpha", "mean_mae", "std_mae", "repetitions")

    def get(self, aggregator: str, alpha: float) -> MaeRow:
        for r in self.rows:
            if r.aggregator == aggregator and math.isclose(r.alpha, alpha):
                return r
        raise KeyError((aggregator, alpha))

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self.CSV_COLUMNS)
        for r in self.rows:
            wr.writerow([r.aggregator, repr(r.alpha), repr(r.mean_mae), repr(r.std_mae),
                         r.repetitions])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def _load_source(cfg: ExperimentConfig) -> SiteDataset | None:
    if cfg.csv_path is None:
        return None
    meta = load_metadata(cfg.csv_path) or {}
    size = cfg.csv_domain_size or meta.get("domain_size")
    if size is None:
        raise ConfigError("csv data needs domain_size (config or sidecar)")
    return load_csv(cfg.csv_path, meta.get("B", cfg.csv_B), size)


def _stream(cfg, key):
    cls = ZeroNoiseStream if cfg.zero_noise else RandomStream
    return cls(cfg.seed, key)


def _one_repetition(cfg: ExperimentConfig, rep: int, source: SiteDataset | None):
    """Errors and predicted variances for every (alpha, aggregator) in one repetition."""
    data_rng = RandomStream(cfg.seed, ("data", rep))
    if source is None:
        pooled = generate_synth(cfg.synth, data_rng.child("synth"))
        reference = cfg.synth.tau
    else:
        pooled = source
        reference = non_private_estimate(cfg.estimator, source)
    split_key = ("split",) if (source is not None and cfg.fixed_split) else ("split", rep)
    sites = split_sites(pooled, cfg.proportions, RandomStream(cfg.seed, split_key))
    out = {}
    for ai, alpha in enumerate(cfg.alphas):
        eps = epsilon_schedule(cfg.eps1, cfg.J, alpha)
        reports = [
            estimate(cfg.estimator, site, PrivacyBudget(e, cfg.delta),
                     _stream(cfg, ("noise", rep, ai, j)))
            for j, (site, e) in enumerate(zip(sites, eps))
        ]
        for name in cfg.aggregators:
            res = aggregate(name, reports)
            out[(name, ai)] = (abs(res.tau_final - reference), res.predicted_variance,
                               res.tau_final - reference)
    return out


def _run_chunk(args):
    cfg, reps, source = args
    return [(rep, _one_repetition(cfg, rep, source)) for rep in reps]


def run_experiment(config: ExperimentConfig) -> MaeTable:
    """Repeat split, per-site estimation and aggregation; summarise the absolute errors.

    Synthetic data is regenerated and re-split every repetition and scored
    against the true effect. CSV data is scored against the pooled
    non-private estimate.
    """
    config.validate()
    source = _load_source(config)
    reps = list(range(int(config.repetitions)))
    results = {}
    if config.workers > 1 and len(reps) > 1:
        chunks = [reps[i::config.workers] for i in range(config.workers)]
        with ProcessPoolExecutor(config.workers) as pool:
            for part in pool.map(_run_chunk, [(config, c, source) for c in chunks if c]):
                results.update(part)
    else:
        results.update(_run_chunk((config, reps, source)))

    rows = []
    for name in config.aggregators:
        for ai, alpha in enumerate(config.alphas):
            err = np.array([results[r][(name, ai)][0] for r in reps])
            pv = np.array([results[r][(name, ai)][1] for r in reps])
            signed = np.array([results[r][(name, ai)][2] for r in reps])
            rows.append(MaeRow(name, float(alpha), float(err.mean()), float(err.std()), len(reps),
                               float(pv.mean()), float(np.mean(signed**2))))
    return MaeTable(tuple(rows))
