#!/usr/bin/env python3
"""
CLI wrapper for scoring user-supplied graphs (e.g. a consensus network or a
published reconstruction) by their Laplace log-evidence.

Usage:
    python causal_score.py studies/demo --graph consensus.csv learned.csv [--prior gp]
"""

import argparse
import sys
from pathlib import Path

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
from pipeline import score_study_graphs


def build_parser(parser: argparse.ArgumentParser = None) -> argparse.ArgumentParser:
    if parser is None:
        parser = argparse.ArgumentParser(description="Score causal graphs by log-evidence.")
    add_study_arguments(parser)
    parser.add_argument(
        "--graph", type=Path, nargs="+", required=True, help="One or more edge list files"
    )
    add_model_arguments(parser)
    add_workspace_arguments(parser)
    return parser


def run(args: argparse.Namespace, logger) -> None:
    path = score_study_graphs(
        args.study_dir,
        args.graph,
        build_prior(args),
        NoiseModel(args.noise),
        build_constraints(args),
        build_fit_options(args),
        out_dir=output_dir(args),
        design_path=args.design,
        censor_threshold=args.censor_threshold,
        settings=model_description(args),
        logger=logger,
    )
    print(f"Scores written to: {path}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run_command("causal_score", args, run)


if __name__ == "__main__":
    sys.exit(main())
