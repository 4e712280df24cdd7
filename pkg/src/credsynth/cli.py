"""Command-line entry points ``bench`` and ``simdata``.

Exit codes: 0 success, 2 validation error, 3 degenerate-data error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import DegenerateDataError, comparison_rows, compare, emit_report, load_bundle, load_plan, load_report, run
from .simdata import SimConfig, write_bundle
from .tabular import DataError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DEGENERATE = 3


def _fail(exc: Exception) -> int:
    code = EXIT_DEGENERATE if isinstance(exc, DegenerateDataError) else EXIT_VALIDATION
    kind = "degenerate data" if code == EXIT_DEGENERATE else "validation error"
    print(f"error ({kind}): {exc}", file=sys.stderr)
    return code


def _bench_run(args) -> int:
    plan = load_plan(args.plan).with_overrides(args.seed, args.folds)
    bundle = load_bundle(args.data, plan.train_fraction, plan.seed)
    report = run(plan, bundle)
    out = Path(args.out)
    for fmt in ("json", "csv", "markdown"):
        emit_report(report, fmt, out)
    s = report.summary
    for name in report.folds:
        row = s[name]
        print(f"{name}: AUC same {row['holdout_same']['auc']['mean']:.4f}  next {row['holdout_next']['auc']['mean']:.4f}"
              f"  KS same {row['holdout_same']['ks']['mean']:.4f}")
    if report.quality is not None:
        q = report.quality
        print(f"quality ({report.chosen_architecture}): KSTest {q.kstest_mean}  CSTest {q.cstest_mean}  "
              f"detection {q.detection}")
    print(f"wrote {out / 'report.json'}")
    return EXIT_OK


def _bench_compare(args) -> int:
    a, b = load_report(args.a), load_report(args.b)
    names = [args.classifier] if args.classifier else [n for n in a.folds if n in b.folds]
    if not names:
        raise DataError("reports share no classifier")
    rows = []
    for name in names:
        for split in args.split:
            rows.append((f"{name} {split} {args.metric}", compare(a, b, args.metric, split, name)))
    if args.json:
        print(json.dumps([{"label": l, **c.to_dict(), "stars": c.stars} for l, c in rows], indent=2, sort_keys=True))
    else:
        for r in comparison_rows(rows):
            print(f"{r['label']}: diff {r['diff_pct']}%  p={r['p_value']} {r['stars']}".rstrip())
    return EXIT_OK


def bench_main(argv=None) -> int:
    # argparse exits with 2 on usage errors, matching EXIT_VALIDATION
    p = argparse.ArgumentParser(prog="bench", description="Run and compare synthetic-data credit scoring experiments.")
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run one experiment plan")
    r.add_argument("--plan", required=True, help="JSON experiment plan")
    r.add_argument("--data", required=True, help="directory with schema.txt, year1.csv, year2.csv")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--seed", type=int, default=None, help="override the plan and synthesizer seed")
    r.add_argument("--folds", type=int, default=None, help="override the number of CV folds")
    c = sub.add_parser("compare", help="paired t-test between two reports")
    c.add_argument("--a", required=True, help="report.json (or its directory)")
    c.add_argument("--b", required=True, help="baseline report.json (or its directory)")
    c.add_argument("--metric", choices=("auc", "ks"), default="auc")
    c.add_argument("--split", nargs="+", choices=("fold", "holdout_same", "holdout_next"),
                   default=["holdout_same", "holdout_next"])
    c.add_argument("--classifier", default=None)
    c.add_argument("--json", action="store_true", help="print JSON instead of text rows")
    args = p.parse_args(argv)
    try:
        return _bench_run(args) if args.cmd == "run" else _bench_compare(args)
    except (DataError, ValueError, KeyError, OSError) as exc:
        return _fail(exc)


def simdata_main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="simdata", description="Generate the simulated two-year credit portfolio.")
    sub = p.add_subparsers(dest="cmd", required=True)
    g = sub.add_parser("gen", help="write year1.csv, year2.csv, schema.txt and truth.json")
    g.add_argument("--config", default=None, help="JSON config (SimConfig fields); defaults if omitted")
    g.add_argument("--out", required=True)
    args = p.parse_args(argv)
    try:
        cfg = SimConfig()
        if args.config:
            path = Path(args.config)
            if not path.is_file():
                raise DataError(f"config file not found: {path}")
            try:
                cfg = SimConfig.from_json(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise DataError(f"config is not valid JSON: {exc}") from exc
            except TypeError as exc:
                raise DataError(f"invalid config: {exc}") from exc
        truth = write_bundle(args.out, cfg)
    except (DataError, ValueError, OSError) as exc:
        return _fail(exc)
    rates = truth.default_rates
    print(f"wrote {args.out}: default rate year1 {rates['year1']:.4f}, year2 {rates['year2']:.4f}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(bench_main())
