"""Command-line front end.

Subcommands map to pipeline stages (each stage recomputes what it needs from
the scenario config, so any stage can be run on its own):

    solve       solve all experiment arms, write potentials and sidecars
    activation  also evaluate and write activation volumes
    compare     full pipeline: masks, comparison and coverage CSVs, manifest
    optimize    unit-solution bank plus the configured strategies
    validate    built-in analytic and property checks
    slice       dump one volume slice as a PGM image and a CSV

Exit codes: 0 success, 1 config or validation error, 2 solver
non-convergence, 3 infeasible optimization.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, ConvergenceError, InfeasibleError, StimfieldError
from .scenario import (
    emit_slice,
    load_scenario,
    stage_activation,
    stage_compare,
    stage_optimize,
    stage_solve,
)
from .validation import run_suite

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NO_CONVERGENCE = 2
EXIT_INFEASIBLE = 3


def _add_scenario_args(parser):
    parser.add_argument("config", help="scenario config (JSON)")
    parser.add_argument("-o", "--output-dir", default=None,
                        help="override the config's output directory")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads for field evaluation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stimfield",
        description="Volume-conductor simulation and activation-volume analysis "
                    "for closely spaced stimulation leads.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("solve", "solve all arms and write potential volumes"),
        ("activation", "write activation volumes for all arms"),
        ("compare", "full pipeline: masks, comparison/coverage CSVs, manifest"),
        ("optimize", "run the configured optimization strategies"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_scenario_args(p)

    v = sub.add_parser("validate", help="run built-in analytic/property checks")
    v.add_argument("suite", nargs="?", default="all",
                   help="one of: analytic, properties, all")
    v.add_argument("--tolerance-factor", type=float, default=1.0,
                   help="scale all tolerances (0 forces failures)")

    s = sub.add_parser("slice", help="dump a volume slice as PGM + CSV")
    s.add_argument("volume", help="volume header file")
    s.add_argument("--axis", choices=["x", "y", "z"], default="z")
    s.add_argument("--index", type=int, required=True)
    s.add_argument("--component", type=int, default=0,
                   help="component for multi-component volumes")
    s.add_argument("-o", "--out", required=True, help="output PGM path")
    return parser


def _scenario_from_args(args):
    scenario = load_scenario(args.config, output_dir=args.output_dir)
    if args.threads is not None:
        scenario.threads = max(1, args.threads)
    return scenario


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "solve":
            scenario = _scenario_from_args(args)
            arms = stage_solve(scenario)
            for name in sorted(arms):
                _, solution = arms[name]
                print(f"{name}: {solution.iterations} iterations, "
                      f"residual {solution.residual_norm:.3e}")
            print(f"artifacts in {scenario.output_dir}")
        elif args.command == "activation":
            scenario = _scenario_from_args(args)
            fields = stage_activation(scenario)
            for name in sorted(fields):
                print(f"{name}: activation volume written")
            print(f"artifacts in {scenario.output_dir}")
        elif args.command == "compare":
            scenario = _scenario_from_args(args)
            _, _, masks = stage_compare(scenario)
            for name in sorted(masks):
                print(f"{name}: {masks[name].count} active nodes")
            print(f"artifacts in {scenario.output_dir}")
        elif args.command == "optimize":
            scenario = _scenario_from_args(args)
            results = stage_optimize(scenario)
            infeasible = False
            for name, result in sorted(results.items()):
                if result.feasible:
                    print(f"{name}: best {result.best.label} "
                          f"objective {result.best.objective:.6g}")
                else:
                    infeasible = True
                    print(f"{name}: infeasible")
            if infeasible:
                return EXIT_INFEASIBLE
        elif args.command == "validate":
            results = run_suite(args.suite, tolerance_factor=args.tolerance_factor)
            failed = 0
            for r in results:
                print(r.line())
                failed += 0 if r.passed else 1
            print(f"{len(results) - failed}/{len(results)} checks passed")
            if failed:
                return EXIT_CONFIG
        elif args.command == "slice":
            pgm, csv_path = emit_slice(args.volume, args.axis, args.index,
                                       args.out, component=args.component)
            print(f"wrote {pgm} and {csv_path}")
    except ConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except InfeasibleError as exc:
        print(f"infeasible optimization: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, StimfieldError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
