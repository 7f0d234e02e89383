"""Command-line entry point.

    mcparareal run            --config exp.toml --out results/
    mcparareal sweep-n        --config exp.toml --out results/
    mcparareal bounds         --config exp.toml --out results/
    mcparareal compare-moment --config exp.toml --out results/

Exit codes: 0 on success, 2 on configuration errors, 3 on numerical failures
(blowup, integrator breakdown, singular closure).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import harness
from .config import lint, load_config
from .errors import (ConfigError, IntegrationFailure, NumericalBlowup,
                     SingularityError)

_COMMANDS = {
    "run": harness.run_experiment,
    "sweep-n": harness.sweep_n,
    "bounds": harness.bounds_table,
    "compare-moment": harness.compare_moment,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcparareal",
        description="Micro-macro Parareal experiments for scalar "
                    "McKean-Vlasov SDEs")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        p.add_argument("--config", required=True,
                       help="TOML config file (or a meta.json from a "
                            "previous run)")
        p.add_argument("--out", default=".",
                       help="output directory (default: current directory)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the configured master seed")
        p.add_argument("--workers", type=int, default=None,
                       help="override the worker count (or set "
                            "MCPARAREAL_WORKERS)")
        p.add_argument("-v", "--verbose", action="store_true",
                       help="log coupling and engine diagnostics")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")

    workers = args.workers
    if workers is None and "MCPARAREAL_WORKERS" in os.environ:
        try:
            workers = int(os.environ["MCPARAREAL_WORKERS"])
        except ValueError:
            print("mcparareal: MCPARAREAL_WORKERS must be an integer",
                  file=sys.stderr)
            return 2

    try:
        cfg = load_config(args.config, seed_override=args.seed,
                          workers_override=workers)
        for warning in lint(cfg):
            print(f"mcparareal: warning: {warning}", file=sys.stderr)
        out_dir = cfg.out_dir if args.out == "." and cfg.out_dir else args.out
        paths = _COMMANDS[args.command](cfg, out_dir)
    except ConfigError as exc:
        print(f"mcparareal: config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalBlowup, IntegrationFailure, SingularityError) as exc:
        print(f"mcparareal: numerical failure: {exc}", file=sys.stderr)
        return 3

    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
