"""``structq`` command line: run, report and oracle subcommands.

Exit codes: 0 success, 2 configuration error, 3 partial failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from ..objectives import SpaceTooLarge
from .config import OUTPUT_ROOT_ENV, ConfigError, apply_overrides, load_config, parse_config
from .oracle import oracle
from .report import ReportError, build_report
from .runner import run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 2, 3


def _run(args) -> int:
    cfg = load_config(args.config)
    cfg = apply_overrides(
        cfg, seeds=args.seed, budget=args.budget, agents=args.agent,
        objective=args.objective, antigen=args.antigen, jobs=args.jobs,
    )
    out, results = run_experiment(cfg)
    failed = [r for r in results if r.status != "ok"]
    print(f"{len(results) - len(failed)}/{len(results)} cells completed -> {out}")
    for r in failed:
        print(f"FAILED {r.file}: {r.error}", file=sys.stderr)
    if not failed and args.report:
        build_report(out)
    return EXIT_PARTIAL if failed else EXIT_OK


def _report(args) -> int:
    try:
        out, errors = build_report(args.run_dir)
    except ReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for e in errors:
        print(f"problem: {e}", file=sys.stderr)
    print(f"report written to {out}")
    return EXIT_PARTIAL if errors else EXIT_OK


def _oracle(args) -> int:
    if args.config:
        spec = load_config(args.config).objective
    else:
        spec = {"kind": args.objective or "table", "L": args.length}
        if args.alphabet:
            spec["alphabet"] = args.alphabet
        else:
            spec["n"] = args.n
        if args.K is not None:
            spec["K"] = args.K
        if args.seed is not None:
            spec["seed"] = args.seed
        if args.values:
            spec = {"kind": "table", "values": json.loads(args.values)}
            if args.alphabet:
                spec["alphabet"] = args.alphabet
            else:
                spec["n"] = args.n
        spec = parse_config({"objective": spec, "agents": ["rs"]}).objective
    try:
        result = oracle(spec)
    except SpaceTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"structure {result.structure}")
    print(f"value {result.value!r}")
    print(f"space_size {result.space_size}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="structq", description="Structured Q-learning experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute every (agent, seed) cell of a config",
                         epilog=f"relative output paths resolve under ${OUTPUT_ROOT_ENV} when set")
    run.add_argument("config")
    run.add_argument("--seed", type=int, nargs="+", help="override the seed list")
    run.add_argument("--budget", type=int)
    run.add_argument("--agent", nargs="+", help="agent kinds, replacing the configured list")
    run.add_argument("--objective", help="override the objective kind")
    run.add_argument("--antigen")
    run.add_argument("--jobs", type=int)
    run.add_argument("--report", action="store_true", help="build the report afterwards")
    run.set_defaults(func=_run)

    rep = sub.add_parser("report", help="aggregate a run directory")
    rep.add_argument("run_dir")
    rep.set_defaults(func=_report)

    orc = sub.add_parser("oracle", help="exhaustive optimum of a small objective")
    orc.add_argument("--config", help="take the objective from an experiment config")
    orc.add_argument("--objective", choices=("table", "nk", "lattice"), help="objective kind")
    orc.add_argument("-n", type=int, default=4, help="alphabet size (first n letters)")
    orc.add_argument("--alphabet", help='"amino" or an explicit symbol string')
    orc.add_argument("-L", "--length", type=int, default=3)
    orc.add_argument("-K", type=int)
    orc.add_argument("--seed", type=int)
    orc.add_argument("--values", help='JSON table, e.g. \'{"A": 0, "B": 1}\'')
    orc.set_defaults(func=_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
