"""
Command-line entry point.

    cmdp-alm run --config configs/cliff_world_pqa.toml --out results
    cmdp-alm oracle --env deep-sea-treasure
    cmdp-alm export-env cliff-world --out docs/environments

Exit codes: 0 on success, 2 when some experiment has no run within its selection
tolerance, 1 on any other error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import typing as t

import numpy as np

from cmdp_alm.augmented_lagrangian import dual_variable_bound
from cmdp_alm.envs import ENVIRONMENTS, export_environment, make_env
from cmdp_alm.exceptions import CmdpAlmException, NoQualifyingConfiguration
from cmdp_alm.experiment.config import ExperimentConfig
from cmdp_alm.experiment.outputs import emit_outputs
from cmdp_alm.experiment.runner import run_experiment
from cmdp_alm.lp import build_occupancy_lp, optimal_solution
from cmdp_alm.run_config import RunConfig
from cmdp_alm.utils import get_debug_mode, patch_logger

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_QUALIFYING = 2


def _parse_args(argv: t.Optional[t.Sequence[str]]) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="cmdp-alm",
        description="Augmented-Lagrangian solvers for tabular constrained MDPs.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Log progress at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run grid-search experiments and write CSV/SVG results")
    run.add_argument(
        "-c",
        "--config",
        action="append",
        required=True,
        help="TOML or JSON experiment config; repeat to plot several experiments together",
    )
    run.add_argument("-o", "--out", default="results", help="Output directory")
    run.add_argument("--eps-sel", type=float, help="Override the selection tolerance")
    run.add_argument("--workers", type=int, default=16, help="Grid points solved concurrently")
    run.add_argument("--no-progress", action="store_true", help="Hide progress bars")

    oracle = sub.add_parser("oracle", help="Solve the occupancy LP of an environment")
    oracle.add_argument("--env", required=True, choices=sorted(ENVIRONMENTS))
    oracle.add_argument("--save-lp", help="Also write the LP in plain text to this path")

    export = sub.add_parser("export-env", help="Write an environment's JSON model and ASCII map")
    export.add_argument("env", choices=sorted(ENVIRONMENTS))
    export.add_argument("-o", "--out", default="docs/environments", help="Output directory")
    return parser.parse_args(argv)


def _configure_logging(verbose: bool):
    if get_debug_mode():
        patch_logger("cmdp_alm", logging.DEBUG)
    elif verbose:
        patch_logger("cmdp_alm", logging.INFO)


def _run(args: argparse.Namespace) -> int:
    run_config = RunConfig(max_workers=args.workers, show_progress=not args.no_progress)
    results = []
    for path in args.config:
        config = ExperimentConfig.from_file(path)
        if args.eps_sel is not None:
            config = config.model_copy(update={"eps_sel": args.eps_sel})
        results.append(run_experiment(config, run_config))
    emit_outputs(results, args.out)

    status = EXIT_OK
    for result in results:
        try:
            selected = result.require_selection()
        except NoQualifyingConfiguration as e:
            print(f"{result.config.label}: {e.message}", file=sys.stderr)
            status = EXIT_NO_QUALIFYING
        else:
            print(
                f"{result.config.label}: selected [{selected.point.label}] "
                f"gap={selected.final_gap:.6g} violation={selected.final_max_violation:.6g} "
                f"gradients={selected.total_grads}"
            )
    return status


def _oracle(args: argparse.Namespace) -> int:
    cmdp, _ = make_env(args.env)
    report = optimal_solution(cmdp)
    solution = report.solution
    with np.printoptions(precision=10):
        print(f"environment: {cmdp.name}")
        print(f"V*_r(rho): {solution.v_star:.12g}")
        print(f"lambda*: {solution.lambda_star}")
        print(f"slater margins zeta: {report.zeta}")
        print(f"multiplier bounds M: {dual_variable_bound(cmdp, report.zeta)}")
        print(f"optimal constraint values: {cmdp.thresholds + solution.slack}")
        print(f"duality gap: {solution.duality_gap:.3e}")
    if args.save_lp:
        build_occupancy_lp(cmdp).save_text(args.save_lp)
    return EXIT_OK


def _export(args: argparse.Namespace) -> int:
    for path in export_environment(args.env, args.out):
        print(path)
    return EXIT_OK


def main(argv: t.Optional[t.Sequence[str]] = None) -> int:
    args = _parse_args(argv)
    _configure_logging(args.verbose)
    handlers = {"run": _run, "oracle": _oracle, "export-env": _export}
    try:
        return handlers[args.command](args)
    except (CmdpAlmException, ValueError, OSError) as e:
        message = e.message if isinstance(e, CmdpAlmException) else str(e)
        print(f"error: {message}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
