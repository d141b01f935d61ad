#!/usr/bin/env python3
"""
CLI wrapper for greedy structure search.

With --sweep-max-edges the search is repeated for each edge budget and the
local-optimum scores of every restart are reported per budget.

Usage:
    python causal_search.py studies/demo [--max-edges 3] [--acyclic] [--restarts 5]
    python causal_search.py studies/demo --sweep-max-edges 0 1 2 3 4
"""

import argparse
import sys

import config
from cli_common import (
    add_model_arguments,
    add_study_arguments,
    add_workspace_arguments,
    build_constraints,
    build_fit_options,
    build_prior,
    model_description,
    output_dir,
    run_command,
)
from likelihood import NoiseModel
from pipeline import search_study, sweep_study


def build_parser(parser: argparse.ArgumentParser = None) -> argparse.ArgumentParser:
    if parser is None:
        parser = argparse.ArgumentParser(description="Search for the highest-evidence causal graph.")
    add_study_arguments(parser)
    add_model_arguments(parser)
    parser.add_argument(
        "--restarts", type=int, default=config.SEARCH_RESTARTS,
        help=f"Random restarts (default: {config.SEARCH_RESTARTS})",
    )
    parser.add_argument(
        "--sweep-max-edges", type=int, nargs="+", default=None,
        help="Run the search once per maximum edge count and report all local optima",
    )
    add_workspace_arguments(parser)
    return parser


def validate(args: argparse.Namespace) -> config.ValidationResult:
    result = config.ValidationResult()
    if args.restarts < 1:
        result.add_error(f"--restarts must be at least 1, got {args.restarts}")
    if args.sweep_max_edges is not None:
        if args.max_edges is not None:
            result.add_error("--max-edges cannot be combined with --sweep-max-edges")
        if any(n < 0 for n in args.sweep_max_edges):
            result.add_error(f"--sweep-max-edges values must be nonnegative: {args.sweep_max_edges}")
    return result


def run(args: argparse.Namespace, logger) -> None:
    common = dict(
        prior=build_prior(args),
        noise=NoiseModel(args.noise),
        fit_options=build_fit_options(args),
        restarts=args.restarts,
        seed=args.seed,
        workers=args.workers,
        out_dir=output_dir(args),
        design_path=args.design,
        censor_threshold=args.censor_threshold,
        settings=model_description(args),
        logger=logger,
    )
    if args.sweep_max_edges is not None:
        path = sweep_study(
            args.study_dir, args.sweep_max_edges, require_acyclic=args.acyclic, **common
        )
        print(f"Sweep written to: {path}")
        return
    path = search_study(args.study_dir, constraints=build_constraints(args), **common)
    print(f"Search report written to: {path}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run_command("causal_search", args, run, validate)


if __name__ == "__main__":
    sys.exit(main())
