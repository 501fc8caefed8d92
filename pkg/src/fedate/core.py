"""Domain types, CSV ingestion and privacy-budget bookkeeping."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import BoundsError, EmptyDataset, InvalidParts, InvalidEpsilonDelta, ParseError

CSV_HEADER = ("w", "y", "x")


class Record(NamedTuple):
    w: int
    y: float
    x: int


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SiteDataset:
    """A site's records stored column-wise, plus public metadata.

    ``domain_size`` is declared, never inferred: covariate codes that never
    occur still enter the sensitivity formulas.
    """

    w: np.ndarray
    y: np.ndarray
    x: np.ndarray
    B: float = 1.0
    domain_size: int = 1
    site_id: str = "1"

    def __post_init__(self):
        w = _frozen(self.w, np.int64)
        y = _frozen(self.y, np.float64)
        x = _frozen(self.x, np.int64)
        if not (w.ndim == y.ndim == x.ndim == 1 and len(w) == len(y) == len(x)):
            raise ValueError("w, y, x must be 1-d arrays of equal length")
        if not self.B > 0:
            raise BoundsError(f"outcome bound must be positive, got {self.B}")
        if int(self.domain_size) < 1:
            raise BoundsError(f"domain size must be >= 1, got {self.domain_size}")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "B", float(self.B))
        object.__setattr__(self, "domain_size", int(self.domain_size))
        object.__setattr__(self, "site_id", str(self.site_id))
        bad = np.flatnonzero((w != 0) & (w != 1))
        if bad.size:
            raise BoundsError(f"record {bad[0]}: treatment must be 0 or 1, got {w[bad[0]]}")
        bad = np.flatnonzero(~np.isfinite(y) | (y < 0) | (y > self.B))
        if bad.size:
            raise BoundsError(f"record {bad[0]}: outcome {y[bad[0]]} outside [0, {self.B}]")
        bad = np.flatnonzero((x < 0) | (x >= self.domain_size))
        if bad.size:
            raise BoundsError(
                f"record {bad[0]}: covariate code {x[bad[0]]} outside [0, {self.domain_size})")

    @classmethod
    def from_records(cls, records: Iterable[Sequence], B=1.0, domain_size=None, site_id="1"):
        records = [Record(int(r[0]), float(r[1]), int(r[2])) for r in records]
        if domain_size is None:
            domain_size = max((r.x for r in records), default=0) + 1
        cols = list(zip(*records)) if records else ([], [], [])
        return cls(np.array(cols[0], dtype=np.int64), np.array(cols[1], dtype=np.float64),
                   np.array(cols[2], dtype=np.int64), B=B, domain_size=domain_size, site_id=site_id)

    @property
    def n(self) -> int:
        return len(self.w)

    def __len__(self):
        return self.n

    @property
    def records(self) -> list[Record]:
        return [Record(int(w), float(y), int(x)) for w, y, x in zip(self.w, self.y, self.x)]

    @property
    def n_treated(self) -> int:
        return int(self.w.sum())

    @property
    def n_control(self) -> int:
        return self.n - self.n_treated

    def subset(self, index, site_id=None) -> "SiteDataset":
        index = np.asarray(index, dtype=np.int64)
        return SiteDataset(self.w[index], self.y[index], self.x[index], B=self.B,
                           domain_size=self.domain_size,
                           site_id=self.site_id if site_id is None else site_id)

    def metadata(self) -> dict:
        return {"B": self.B, "domain_size": self.domain_size, "site_id": self.site_id}


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".meta.json")


def load_metadata(path) -> dict | None:
    """Read the JSON sidecar next to a dataset CSV, if there is one."""
    p = sidecar_path(path)
    if not p.exists():
        return None
    with open(p, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{p}: {exc}") from None


def load_csv(path, B: float, domain_size: int, site_id: str | None = None) -> SiteDataset:
    """Parse a ``w,y,x`` CSV into a validated dataset.

    Out-of-range outcomes or codes raise :class:`BoundsError`; nothing is clipped.
    """
    w, y, x = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ParseError(f"expected header 'w,y,x', got {header!r}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", line=lineno)
            try:
                wi = int(row[0])
                yi = float(row[1])
                xi = int(row[2])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            if wi not in (0, 1):
                raise BoundsError(f"treatment must be 0 or 1, got {wi}", line=lineno)
            if not (math.isfinite(yi) and 0 <= yi <= B):
                raise BoundsError(f"outcome {yi} outside [0, {B}]", line=lineno)
            if not 0 <= xi < domain_size:
                raise BoundsError(f"covariate code {xi} outside [0, {domain_size})", line=lineno)
            w.append(wi)
            y.append(yi)
            x.append(xi)
    if not w:
        raise EmptyDataset(f"{path}: no records")
    if site_id is None:
        site_id = Path(path).stem
    return SiteDataset(np.array(w), np.array(y), np.array(x), B=B,
                       domain_size=domain_size, site_id=site_id)


def save_csv(dataset: SiteDataset, path, sidecar: bool = True) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for w, y, x in zip(dataset.w.tolist(), dataset.y.tolist(), dataset.x.tolist()):
            fh.write(f"{w},{y!r},{x}\n")
    if sidecar:
        with open(sidecar_path(path), "w", encoding="utf-8") as fh:
            json.dump(dataset.metadata(), fh)
            fh.write("\n")


@dataclass(frozen=True)
class StratumCounts:
    """Per-code treated/control tallies. Only occupied codes are stored."""

    counts: Mapping[int, tuple[int, int]]
    n: int
    domain_size: int

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Codes, treated counts and control counts of occupied strata."""
        codes = np.array(sorted(self.counts), dtype=np.int64)
        t = np.array([self.counts[k][0] for k in codes], dtype=np.int64)
        c = np.array([self.counts[k][1] for k in codes], dtype=np.int64)
        return codes, t, c

    @property
    def has_absent(self) -> bool:
        return len(self.counts) < self.domain_size

    @classmethod
    def from_pairs(cls, pairs: Mapping[int, tuple[int, int]], domain_size: int | None = None):
        pairs = {int(k): (int(v[0]), int(v[1])) for k, v in pairs.items() if v[0] + v[1] > 0}
        n = sum(t + c for t, c in pairs.values())
        if domain_size is None:
            domain_size = max(pairs, default=0) + 1
        return cls(pairs, n, domain_size)


def stratify(dataset: SiteDataset) -> StratumCounts:
    size = dataset.domain_size
    t = np.bincount(dataset.x[dataset.w == 1], minlength=size)
    c = np.bincount(dataset.x[dataset.w == 0], minlength=size)
    occupied = np.flatnonzero(t + c)
    counts = {int(k): (int(t[k]), int(c[k])) for k in occupied}
    return StratumCounts(counts, dataset.n, size)


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise InvalidEpsilonDelta(f"epsilon must be positive, got {self.epsilon}")
        if not 0 <= self.delta < 1:
            raise InvalidEpsilonDelta(f"delta must lie in [0, 1), got {self.delta}")


@dataclass(frozen=True)
class BudgetSplit:
    """Sequential-composition ledger: labelled sub-budgets drawn from one total."""

    parts: tuple[tuple[str, PrivacyBudget], ...] = field(default_factory=tuple)

    @property
    def epsilon(self) -> float:
        total = 0.0
        for _, b in self.parts:
            total += b.epsilon
        return total

    @property
    def delta(self) -> float:
        total = 0.0
        for _, b in self.parts:
            total += b.delta
        return total

    def __getitem__(self, label) -> PrivacyBudget:
        for name, b in self.parts:
            if name == label:
                return b
        raise KeyError(label)

    def __iter__(self):
        return iter(self.parts)

    def __len__(self):
        return len(self.parts)

    def to_list(self) -> list[dict]:
        return [{"label": k, "epsilon": b.epsilon, "delta": b.delta} for k, b in self.parts]


def _even_shares(total: float, parts: int) -> list[float]:
    # The last share absorbs rounding so the left-to-right sum reproduces total exactly.
    share = total / parts
    out = [share] * (parts - 1)
    acc = 0.0
    for s in out:
        acc += s
    out.append(total - acc)
    return out


def split_budget(total: PrivacyBudget, parts: int, labels: Sequence[str] | None = None) -> BudgetSplit:
    if not isinstance(parts, (int, np.integer)) or parts < 1:
        raise InvalidParts(f"parts must be a positive integer, got {parts!r}")
    if labels is None:
        labels = [f"part{i + 1}" for i in range(parts)]
    if len(labels) != parts:
        raise InvalidParts("need one label per part")
    eps = _even_shares(total.epsilon, parts)
    dels = _even_shares(total.delta, parts)
    return BudgetSplit(tuple((lab, PrivacyBudget(e, d)) for lab, e, d in zip(labels, eps, dels)))


REPORT_FIELDS = ("site_id", "n", "tau_dp", "var_dp", "epsilon", "delta", "estimator")


@dataclass(frozen=True)
class PrivateSiteReport:
    """What a site sends to the server. ``var_dp`` is clamped at zero."""

    tau_dp: float
    var_dp: float
    n: int
    site_id: str
    budget_spent: BudgetSplit = field(default_factory=BudgetSplit)
    estimator: str = ""
    noise_scale: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "tau_dp", float(self.tau_dp))
        object.__setattr__(self, "var_dp", max(0.0, float(self.var_dp)))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "site_id", str(self.site_id))
        if self.n < 1:
            raise EmptyDataset("report sample size must be positive")

    @property
    def epsilon(self) -> float:
        return self.budget_spent.epsilon

    @property
    def delta(self) -> float:
        return self.budget_spent.delta

    def to_dict(self) -> dict:
        d = {
            "site_id": self.site_id,
            "n": self.n,
            "tau_dp": self.tau_dp,
            "var_dp": self.var_dp,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "estimator": self.estimator,
        }
        if self.noise_scale is not None:
            d["noise_scale"] = self.noise_scale
        d["budget_spent"] = self.budget_spent.to_list()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping) -> "PrivateSiteReport":
        missing = [k for k in ("site_id", "n", "tau_dp", "var_dp") if k not in d]
        if missing:
            raise ParseError(f"report is missing fields {missing}")
        if "budget_spent" in d:
            ledger = BudgetSplit(tuple(
                (p["label"], PrivacyBudget(p["epsilon"], p["delta"])) for p in d["budget_spent"]))
        elif "epsilon" in d:
            ledger = BudgetSplit((("total", PrivacyBudget(d["epsilon"], d.get("delta", 0.0))),))
        else:
            ledger = BudgetSplit()
        return cls(tau_dp=d["tau_dp"], var_dp=d["var_dp"], n=d["n"], site_id=d["site_id"],
                   budget_spent=ledger, estimator=d.get("estimator", ""),
                   noise_scale=d.get("noise_scale"))

    @classmethod
    def from_json(cls, text: str) -> "PrivateSiteReport":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid report JSON: {exc}") from None
