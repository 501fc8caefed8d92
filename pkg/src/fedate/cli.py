"""Command-line entry point.

JSON goes to stdout and diagnostics to stderr. Exit codes: 0 success,
1 unreadable input, 2 precondition violation, 3 internal invariant failure.
"""

from __future__ import annotations

import argparse
import json
import secrets
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .aggregation import AGGREGATORS, aggregate
from .core import PrivacyBudget, PrivateSiteReport, load_csv, load_metadata, save_csv, stratify
from .errors import FedAteError, InputError, InvariantError, ParseError
from .estimators import EstimatorKind, estimate
from .matching import smooth_sensitivity_variance, tau_sensitivity
from .mechanisms import RandomStream, beta_for
from .sim import ExperimentConfig, SynthParams, generate_synth, run_experiment


def _say(msg):
    print(msg, file=sys.stderr)


def _emit(obj):
    print(json.dumps(obj))


def _seed(args) -> int:
    if args.seed is None:
        args.seed = secrets.randbits(63)
        _say(f"seed: {args.seed}")
    return args.seed


def _number_or_random(text):
    return text if text == "random" else float(text)


def _load_dataset(args):
    meta = load_metadata(args.data) or {}
    B = args.B if args.B is not None else meta.get("B", 1.0)
    size = args.domain_size if args.domain_size is not None else meta.get("domain_size")
    if size is None:
        # Without a declared domain, unseen codes are invisible to the sensitivity bounds.
        with open(args.data, encoding="utf-8") as fh:
            codes = [int(line.rsplit(",", 1)[1]) for line in fh.readlines()[1:] if line.strip()]
        size = max(codes) + 1 if codes else 1
        _say(f"warning: no --domain-size or sidecar; using {size} from the data")
    return load_csv(args.data, float(B), int(size), site_id=args.site_id or meta.get("site_id"))


def cmd_generate(args):
    params = SynthParams(n=args.n, domain_size=args.domain_size, a=args.a, b=args.b, tau=args.tau)
    ds = generate_synth(params, RandomStream(_seed(args), ("generate",)), site_id=Path(args.out).stem)
    save_csv(ds, args.out)
    _emit({"path": str(args.out), "n": ds.n, "domain_size": ds.domain_size, "B": ds.B,
           "seed": args.seed})


def cmd_site_report(args):
    ds = _load_dataset(args)
    budget = PrivacyBudget(args.epsilon, args.delta)
    rng = RandomStream(_seed(args), ("site", ds.site_id))
    report = estimate(args.estimator, ds, budget, rng)
    if abs(report.epsilon - budget.epsilon) > 0 or abs(report.delta - budget.delta) > 0:
        raise InvariantError("report ledger does not sum to the requested budget")
    _emit(report.to_dict())


def _read_reports(paths):
    reports = []
    for p in paths:
        text = sys.stdin.read() if p == "-" else Path(p).read_text(encoding="utf-8")
        lines = [ln for ln in text.splitlines() if ln.strip()]
        try:
            reports.append(PrivateSiteReport.from_json(text))
        except ParseError:
            # several reports, one per line
            if len(lines) < 2:
                raise
            reports.extend(PrivateSiteReport.from_json(ln) for ln in lines)
    return reports


def cmd_aggregate(args):
    result = aggregate(args.method, _read_reports(args.reports))
    _emit(result.to_dict())


def cmd_sensitivity(args):
    ds = _load_dataset(args)
    if args.beta is not None:
        beta = args.beta
    elif args.epsilon is not None and args.delta is not None:
        beta = beta_for(args.epsilon, args.delta)
    else:
        raise FedAteError("give --beta or both --epsilon and --delta")
    counts = stratify(ds)
    tau = tau_sensitivity(counts, ds.B, beta)
    var = smooth_sensitivity_variance(counts, ds.B, beta)
    _emit({"n": ds.n, "beta": beta, "local_sensitivity_bound": tau.local_bound,
           "smooth_sensitivity_tau": tau.smooth.value, "smooth_sensitivity_variance": var.value,
           "argmax_k": tau.argmax_k, "argmax_stratum": tau.argmax_stratum})


def cmd_experiment(args):
    cfg = ExperimentConfig.load(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    if args.seed is not None:
        cfg.seed = args.seed
    table = run_experiment(cfg)
    table.write_csv(args.out)
    for name in cfg.aggregators:
        rows = [r for r in table.rows if r.aggregator == name]
        _emit({"aggregator": name, "alphas": [r.alpha for r in rows],
               "mean_mae": [r.mean_mae for r in rows], "repetitions": cfg.repetitions})
    _say(f"wrote {args.out}")


def cmd_oracle_check(args):
    from .matching import smooth_sensitivity_tau
    from .oracles import build_corpus, corpus_local_sensitivity, smoothness_violations

    summary = []
    for n in range(1, args.max_n + 1):
        level = build_corpus(n, args.domain_size)
        ls = corpus_local_sensitivity(level, level.tau)
        for beta in args.beta:
            s = np.array([smooth_sensitivity_tau(c, 1.0, beta).value for c in level.counts])
            s = s[level.signature]
            summary.append({"n": n, "beta": beta, "datasets": level.size,
                            "validity_violations": int(np.count_nonzero(s < ls * (1 - 1e-12))),
                            "smoothness_violations": smoothness_violations(level, s, beta)})
            _say(f"n={n} beta={beta}: {summary[-1]}")
    _emit(summary)
    if any(r["validity_violations"] or r["smoothness_violations"] for r in summary):
        raise InvariantError("smooth sensitivity failed the exhaustive check")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedate", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset CSV and its sidecar")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--domain-size", type=int, default=100)
    g.add_argument("--a", type=_number_or_random, default="random")
    g.add_argument("--b", type=_number_or_random, default="random")
    g.add_argument("--tau", type=float, default=0.5)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    def data_flags(q):
        q.add_argument("--data", required=True)
        q.add_argument("--B", type=float)
        q.add_argument("--domain-size", type=int)
        q.add_argument("--site-id")

    s = sub.add_parser("site-report", help="private report for one site")
    data_flags(s)
    s.add_argument("--estimator", choices=[k.value for k in EstimatorKind], required=True)
    s.add_argument("--epsilon", type=float, required=True)
    s.add_argument("--delta", type=float, default=0.0)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_site_report)

    a = sub.add_parser("aggregate", help="combine site reports ('-' reads stdin)")
    a.add_argument("--method", choices=sorted(AGGREGATORS), default="mvagg")
    a.add_argument("reports", nargs="+")
    a.set_defaults(func=cmd_aggregate)

    t = sub.add_parser("sensitivity", help="local and smooth sensitivity of a dataset")
    data_flags(t)
    t.add_argument("--beta", type=float)
    t.add_argument("--epsilon", type=float)
    t.add_argument("--delta", type=float)
    t.set_defaults(func=cmd_sensitivity)

    e = sub.add_parser("experiment", help="run an MAE sweep from a JSON config")
    e.add_argument("--config", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--workers", type=int)
    e.add_argument("--seed", type=int)
    e.set_defaults(func=cmd_experiment)

    o = sub.add_parser("oracle-check", help="exhaustive smooth-sensitivity check on small datasets")
    o.add_argument("--max-n", type=int, default=4)
    o.add_argument("--domain-size", type=int, default=2)
    o.add_argument("--beta", type=float, nargs="+", default=[0.04096, 0.5, 2.0])
    o.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except FedAteError as exc:
        _say(f"error: {type(exc).__name__}: {exc}")
        return exc.exit_code
    except (OSError, UnicodeDecodeError) as exc:
        _say(f"error: {exc}")
        return InputError.exit_code
    except Exception as exc:  # noqa: BLE001
        _say(f"internal error: {type(exc).__name__}: {exc}")
        return InvariantError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
