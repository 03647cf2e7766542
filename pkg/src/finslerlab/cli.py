"""Command-line entry point: ``finslerlab <subcommand> --scenario file.yaml``."""

from __future__ import annotations

import argparse
import sys

from .errors import FinslerLabError
from .runner import EXIT_PRECONDITION, Runner
from .scenario import CHECKS, load_scenario


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="finslerlab", description="Finsler heat-flow estimate laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in CHECKS + ("all",):
        p = sub.add_parser(name, help="run the scenario's check list" if name == "all" else f"run the {name} step")
        p.add_argument("--scenario", required=True, help="YAML scenario file")
        p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--strict-variant", action="store_true", help="decide the flow estimate with 2*C1")
        p.add_argument("--refine", type=int, default=0, metavar="K", help="halve h and dt K times")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = load_scenario(args.scenario)
        if args.seed is not None:
            if args.seed < 0:
                raise FinslerLabError("--seed must be nonnegative")
            sc.config["seed"] = args.seed
        if args.refine < 0:
            raise FinslerLabError("--refine must be nonnegative")
        sc = sc.refined(args.refine)
    except FinslerLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    out = args.out if args.out is not None else sc.config["output"]["dir"]
    checks = list(sc.config["checks"]) if args.command == "all" else [args.command]
    summary = Runner(sc, out, strict_variant=args.strict_variant).run(checks)
    for name, rec in summary["checks"].items():
        line = f"{name}: {rec['status']}"
        if "worst_margin" in rec:
            line += f" (worst margin {rec['worst_margin']:.4g}, budget {rec['tol_budget']:.4g})"
        if "error" in rec:
            line += f" ({rec['error']})"
        print(line)
    print(f"artifacts in {out}; exit code {summary['exit_code']}")
    return summary["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
