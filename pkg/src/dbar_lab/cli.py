"""
Command line entry point: `dbar-lab <experiment> [flags]`.

Exit statuses: 0 when every check passed, 1 when a numerical check failed or
a numerical error stopped the run, 2 for usage and configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence

from dbar_lab.api import DbarLab
from dbar_lab.internal.experiments.registry import ExperimentRegistryError
from dbar_lab.internal.orchestration import ExperimentError
from dbar_lab.internal.reporting import ReportError
from dbar_lab.model.config import ExperimentKind, load_config
from dbar_lab.model.options import ConfigError

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

_HELP = {
    ExperimentKind.DISC_EXAMPLE: "certified witness sequence and λ on its neighborhoods",
    ExperimentKind.SHRINK_STUDY: "λ over shrinking polydiscs at a strictly pseudoconvex point",
    ExperimentKind.MKH_SUITE: "weighted inequality on seeded random forms",
    ExperimentKind.PROBE: "least constant of the compactness estimate on the witness family",
    ExperimentKind.ANCHORS: "λ on the 4-cube against π²/L²",
}


def _global_flags() -> argparse.ArgumentParser:
    flags = argparse.ArgumentParser(add_help=False)
    flags.add_argument("--config", metavar="PATH", help="TOML file overlaid on the packaged defaults")
    flags.add_argument("--out", metavar="DIR", help="output directory for the CSV and JSON reports")
    flags.add_argument("--seed", type=int)
    flags.add_argument("--quad-tol", type=float)
    flags.add_argument("--solver-tol", type=float)
    flags.add_argument("--threads", type=int)
    flags.add_argument("--h", type=float, nargs="+", help="lattice spacings")
    flags.add_argument("--j", type=int, nargs="+", help="witness indices")
    flags.add_argument(
        "--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR")
    )
    return flags


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dbar-lab", description="∂̄-Neumann compactness lab")
    sub = parser.add_subparsers(dest="command", required=True)
    flags = _global_flags()
    for kind in ExperimentKind:
        sub.add_parser(kind.value, parents=[flags], help=_HELP[kind])
    plot = sub.add_parser("plot-script", help="write a matplotlib script for an experiment CSV")
    plot.add_argument("csv", metavar="CSV")
    plot.add_argument("--output", metavar="PATH")
    plot.add_argument(
        "--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR")
    )
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, object]:
    return {
        "out": args.out,
        "seed": args.seed,
        "quad_tol": args.quad_tol,
        "solver_tol": args.solver_tol,
        "threads": args.threads,
        "h": args.h,
        "j": args.j,
    }


def _fail(message: str) -> None:
    print(f"dbar-lab: {message}", file=sys.stderr)


# :: ExternalApiMethod
def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(message)s")

    if args.command == "plot-script":
        try:
            print(DbarLab.plot_script(args.csv, args.output))
        except (OSError, ReportError) as e:
            _fail(str(e))
            return EXIT_USAGE
        return EXIT_OK

    try:
        config = load_config(args.command, args.config, _overrides(args))
    except ConfigError as e:
        _fail(str(e) if e.key is None else f"{e} (key: {e.key})")
        return EXIT_USAGE

    try:
        artifacts = DbarLab.run_and_write(config)
    except ConfigError as e:
        _fail(str(e) if e.key is None else f"{e} (key: {e.key})")
        return EXIT_USAGE
    except ExperimentRegistryError as e:
        _fail(str(e))
        return EXIT_USAGE
    except ExperimentError as e:
        _fail(str(e))
        return EXIT_FAILED
    except (ArithmeticError, RuntimeError) as e:
        _fail(f"{type(e).__name__}: {e}")
        return EXIT_FAILED

    report = artifacts.report
    for failure in report.failures:
        _fail(failure)
    print(f"{artifacts.csv_path}\n{artifacts.json_path}")
    return EXIT_OK if report.passed else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
