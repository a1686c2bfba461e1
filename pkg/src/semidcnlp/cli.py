"""Command-line entry point: ``semidcnlp {solve,shoot,compare,plotdata}``.

Exit codes: 0 success, 2 solver or shooting non-convergence, 3 I/O or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .collocation import RULES
from .config import ConfigError, RunConfig, load_config, with_overrides
from .io import TrajectoryFormatError
from .runs import EXIT_IO, EXIT_NOT_CONVERGED, EXIT_OK, emit_plot_data, run_compare, run_shoot, run_solve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semidcnlp",
        description="Stackelberg pursuit-evasion solver (direct collocation with "
        "follower necessary conditions) and its indirect shooting cross-check.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="JSON run configuration (defaults: benchmark)")
        p.add_argument("--out", type=Path, help="run directory (default: <output_dir>/<command>)")
        p.add_argument("--mesh", type=int, metavar="N", help="number of collocation segments")
        p.add_argument("--rule", choices=RULES, help="collocation rule")

    common(sub.add_parser("solve", help="solve the transcribed game"))
    p = sub.add_parser("shoot", help="indirect shooting seeded from a trajectory file")
    common(p)
    p.add_argument("--seed", type=Path, required=True, help="seed trajectory CSV (usually solve output)")

    p = sub.add_parser("compare", help="compare two trajectory files")
    p.add_argument("a", type=Path)
    p.add_argument("b", type=Path)
    p.add_argument("--config", type=Path, help="config whose 'compare' section sets tolerances")
    p.add_argument("--out", type=Path, help="write the report JSON here")
    p.add_argument("--tf-tol", type=float, help="relative t_f tolerance")
    p.add_argument("--dev-tol", type=float, help="max deviation tolerance")

    p = sub.add_parser("plotdata", help="emit plot-ready CSV files from a trajectory")
    p.add_argument("trajectory", type=Path)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return with_overrides(
        cfg,
        segments=getattr(args, "mesh", None),
        rule=getattr(args, "rule", None),
    )


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors, which is reserved for non-convergence here
        return EXIT_OK if exc.code == 0 else EXIT_IO
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "solve":
            outcome = run_solve(_config(args), args.out)
            d = outcome.diagnostics
            print(f"{d['solver_status']}: t_f = {d.get('t_f')}  ({outcome.out_dir})")
            return outcome.exit_code
        if args.command == "shoot":
            outcome = run_shoot(_config(args), args.seed, args.out)
            d = outcome.diagnostics
            print(f"{d['message']}: t_f = {outcome.result.t_f}  residual = {d['residual_norm']:.3g}  ({outcome.out_dir})")
            return outcome.exit_code
        if args.command == "compare":
            cfg = load_config(args.config) if args.config else RunConfig()
            tol = {
                "t_f_rel": cfg.compare.t_f_rel if args.tf_tol is None else args.tf_tol,
                "max_deviation": cfg.compare.max_deviation if args.dev_tol is None else args.dev_tol,
                "variables": cfg.compare.variables,
            }
            report = run_compare(args.a, args.b, tol, args.out)
            print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
            return EXIT_OK if report.passed else EXIT_NOT_CONVERGED
        if args.command == "plotdata":
            for path in emit_plot_data(args.trajectory, args.out):
                print(path)
            return EXIT_OK
    except (ConfigError, TrajectoryFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
