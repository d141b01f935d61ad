#!/usr/bin/env python3
"""
CLI wrapper for stability selection: edge selection frequencies over
repeated greedy searches on row subsamples, exported as JSON and DOT.

Usage:
    python causal_stability.py studies/demo [--runs 50] [--subsample-fraction 0.5] [--max-edges 3]
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
from pipeline import stability_study


def build_parser(parser: argparse.ArgumentParser = None) -> argparse.ArgumentParser:
    if parser is None:
        parser = argparse.ArgumentParser(description="Edge stability over subsampled searches.")
    add_study_arguments(parser)
    add_model_arguments(parser)
    parser.add_argument(
        "--runs", type=int, default=config.STABILITY_RUNS,
        help=f"Subsample runs (default: {config.STABILITY_RUNS})",
    )
    parser.add_argument(
        "--subsample-fraction", type=float, default=config.STABILITY_SUBSAMPLE_FRACTION,
        help=f"Rows kept per condition (default: {config.STABILITY_SUBSAMPLE_FRACTION})",
    )
    parser.add_argument(
        "--restarts", type=int, default=config.STABILITY_RESTARTS,
        help=f"Search restarts per run (default: {config.STABILITY_RESTARTS})",
    )
    parser.add_argument(
        "--min-frequency", type=float, default=0.0,
        help="Omit edges below this frequency from the DOT export (default: 0)",
    )
    add_workspace_arguments(parser)
    return parser


def validate(args: argparse.Namespace) -> config.ValidationResult:
    result = config.ValidationResult()
    if args.runs < 1:
        result.add_error(f"--runs must be at least 1, got {args.runs}")
    if not 0 < args.subsample_fraction < 1:
        result.add_error(
            f"--subsample-fraction must lie strictly between 0 and 1, got {args.subsample_fraction}"
        )
    if args.restarts < 1:
        result.add_error(f"--restarts must be at least 1, got {args.restarts}")
    if not 0 <= args.min_frequency <= 1:
        result.add_error(f"--min-frequency must lie in [0, 1], got {args.min_frequency}")
    return result


def run(args: argparse.Namespace, logger) -> None:
    path = stability_study(
        args.study_dir,
        build_prior(args),
        NoiseModel(args.noise),
        build_constraints(args),
        build_fit_options(args),
        n_runs=args.runs,
        subsample_fraction=args.subsample_fraction,
        restarts=args.restarts,
        seed=args.seed,
        workers=args.workers,
        min_frequency=args.min_frequency,
        out_dir=output_dir(args),
        design_path=args.design,
        censor_threshold=args.censor_threshold,
        settings=model_description(args),
        logger=logger,
    )
    print(f"Edge frequencies written to: {path}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run_command("causal_stability", args, run, validate)


if __name__ == "__main__":
    sys.exit(main())
