"""Command line entry point: ``survbench {simulate,bootstrap,plots}``."""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import runner
from .dataio import load_csv, load_schema

SMOKE_B = 50


def _simulate(args) -> int:
    if args.plan:
        plan = runner.load_plan(args.plan, smoke=args.smoke, out_dir=args.out, workers=args.workers)
    else:
        seed = int(os.environ.get("SURVBENCH_SEED", 20240101))
        plan = runner.default_plan(smoke=args.smoke, out_dir=args.out or "results",
                                   workers=args.workers or 1, seed=seed)
    if args.no_timing:
        plan = replace(plan, record_timing=False)
    path = runner.run_scenarios(plan, progress=args.verbose)
    print(path)
    return 0


def _bootstrap(args) -> int:
    schema = load_schema(args.schema)
    ds = load_csv(args.data, schema)
    name = schema.name if schema.name in ("pbc", "prostate") else None
    B = SMOKE_B if args.smoke else args.B
    ds = runner.prepare_reference(ds, name)
    seed = int(os.environ.get("SURVBENCH_SEED", args.seed))
    interactions = None
    if args.interaction:
        interactions = [tuple(s.split(":", 1)) for s in args.interaction]
    rows = runner.run_real_data_bootstrap(ds, B=B, methods=args.methods, seed=seed,
                                          n_trees=args.n_trees,
                                          treatment=args.treatment or _default_treatment(name),
                                          interactions=interactions if interactions is not None
                                          else _default_interactions(name))
    for r in rows:
        r["dataset"] = schema.name
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"bootstrap_{schema.name}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(f"{r['method']:<18} {r['metric']:<8} {r['theta']:.3f} "
              f"({r['ci_low']:.3f}, {r['ci_high']:.3f})")
    print(path)
    return 0


def _default_treatment(name):
    from .simgen import REFERENCES
    return REFERENCES[name]["treatment"] if name else None


def _default_interactions(name):
    from .simgen import interaction_pairs
    return interaction_pairs(name) if name else ()


def _plots(args) -> int:
    paths = runner.emit_plot_data(args.results, args.out)
    for p in paths.values():
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="survbench",
                                description="Cox vs random survival forest benchmark")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a simulation plan")
    s.add_argument("--plan", help="plan JSON (default: the full scenario grid)")
    s.add_argument("--out", help="output directory")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--smoke", action="store_true", help="at most 20 replicates per scenario")
    s.add_argument("--no-timing", action="store_true",
                   help="leave timing columns empty (byte-reproducible output)")
    s.set_defaults(func=_simulate)

    b = sub.add_parser("bootstrap", help=".632+ bootstrap on a real dataset")
    b.add_argument("--data", required=True)
    b.add_argument("--schema", required=True)
    b.add_argument("--B", type=int, default=1000)
    b.add_argument("--out", default="results")
    b.add_argument("--methods", nargs="+", default=list(runner.METHODS))
    b.add_argument("--n-trees", type=int, default=500)
    b.add_argument("--seed", type=int, default=20240101)
    b.add_argument("--treatment", help="column forced into the Cox model")
    b.add_argument("--interaction", action="append", metavar="A:B",
                   help="candidate treatment interaction (repeatable)")
    b.add_argument("--smoke", action="store_true", help=f"B = {SMOKE_B}")
    b.set_defaults(func=_bootstrap)

    q = sub.add_parser("plots", help="plot-ready CSV summaries of a results directory")
    q.add_argument("--results", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=_plots)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"survbench: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
