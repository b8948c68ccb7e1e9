"""Command-line front end.

Subcommands: solve-topological, solve-mixed, shoot-radial, dump-approx,
liouville-table, verify.  Exit codes: 0 success, 2 configuration or
unsupported-input error, 3 convergence failure in strict mode.
"""

from __future__ import annotations

import argparse
import sys

from csvortex.config import ConfigError, load_config
from csvortex.model import UnsupportedConfigurationError
from csvortex.solver import SolverDivergenceError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3


def _add_common(p: argparse.ArgumentParser, eps: bool = False):
    p.add_argument("--config", required=True, help="path to the JSON run configuration")
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--strict", action="store_true", help="fail hard on warnings and divergence")
    if eps:
        p.add_argument(
            "--eps", type=float, nargs="+", default=None,
            help="override the epsilon list from the configuration",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csvortex",
        description="Mixed-type vortex solver for rank-2 self-dual Chern-Simons systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("solve-topological", help="solve the scalar vortex equation"))

    _add_common(sub.add_parser("solve-mixed", help="run the two-scale mixed construction"), eps=True)

    p = sub.add_parser("shoot-radial", help="integrate the coupled radial system")
    _add_common(p)
    p.add_argument("--s1", type=float, required=True, help="local expansion constant of u1")
    p.add_argument("--s2", type=float, required=True, help="local expansion constant of u2")
    p.add_argument("--horizon", type=float, default=20.0)

    p = sub.add_parser("dump-approx", help="emit the approximate-solution fields")
    _add_common(p)
    p.add_argument("--eps", type=float, required=True)

    _add_common(sub.add_parser("liouville-table", help="mass and Gram sweep table"))

    p = sub.add_parser("verify", help="run the acceptance battery")
    p.add_argument("--quick", action="store_true", help="fast subset of the criteria")
    p.add_argument("--out", default=None, help="optional report path prefix")
    p.add_argument("--criteria", type=int, nargs="+", default=None, help="run specific criteria")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "verify":
        from csvortex.acceptance import run_all, run_selected

        if args.criteria:
            results = run_selected(args.criteria, printer=print)
        else:
            results = run_all(quick=args.quick, printer=print)
        n_pass = sum(r.passed for r in results)
        print(f"{n_pass}/{len(results)} criteria passed")
        if args.out:
            from csvortex.report import write_report

            write_report(
                args.out + "_verify.json",
                {
                    "command": "verify",
                    "results": [
                        {
                            "criterion": r.index,
                            "name": r.name,
                            "passed": r.passed,
                            "detail": r.detail,
                            "seconds": r.seconds,
                        }
                        for r in results
                    ],
                },
            )
        return EXIT_OK if n_pass == len(results) else 1

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if getattr(args, "strict", False):
        cfg.strict = True
    if getattr(args, "eps", None) and args.command == "solve-mixed":
        if any(b >= a for a, b in zip(args.eps, args.eps[1:])) or min(args.eps) <= 0:
            print("error: --eps values must be positive and strictly decreasing", file=sys.stderr)
            return EXIT_CONFIG
        cfg.epsilons = list(args.eps)

    from csvortex import drivers

    try:
        if args.command == "solve-topological":
            drivers.run_topological(cfg, args.out)
        elif args.command == "solve-mixed":
            drivers.run_mixed(cfg, args.out)
        elif args.command == "shoot-radial":
            drivers.run_shoot(cfg, args.s1, args.s2, args.horizon, args.out)
        elif args.command == "dump-approx":
            drivers.run_dump_approx(cfg, args.eps, args.out)
        elif args.command == "liouville-table":
            drivers.run_liouville_table(cfg, args.out)
    except (UnsupportedConfigurationError, ConfigError) as exc:
        print(f"error: unsupported configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverDivergenceError as exc:
        print(f"error: convergence failure: {exc}", file=sys.stderr)
        if cfg.strict:
            return EXIT_CONVERGENCE
        return EXIT_OK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
