#!/usr/bin/env python3
"""
CLI wrapper for MAP-fitting the linearized parameters of a given graph.

Usage:
    python causal_fit.py studies/demo --graph graph.csv [--prior linear|gp] [--noise gaussian|supergaussian]
"""

import argparse
import sys
from pathlib import Path

from cli_common import (
    add_model_arguments,
    add_study_arguments,
    add_workspace_arguments,
    build_fit_options,
    build_prior,
    model_description,
    output_dir,
    run_command,
)
from likelihood import NoiseModel
from pipeline import fit_study_graph


def build_parser(parser: argparse.ArgumentParser = None) -> argparse.ArgumentParser:
    if parser is None:
        parser = argparse.ArgumentParser(description="MAP-fit a causal graph to a study.")
    add_study_arguments(parser)
    parser.add_argument(
        "--graph", type=Path, required=True, help="Edge list file (source,target by name)"
    )
    add_model_arguments(parser)
    add_workspace_arguments(parser)
    return parser


def run(args: argparse.Namespace, logger) -> None:
    path = fit_study_graph(
        args.study_dir,
        args.graph,
        build_prior(args),
        NoiseModel(args.noise),
        build_fit_options(args),
        out_dir=output_dir(args),
        design_path=args.design,
        censor_threshold=args.censor_threshold,
        settings=model_description(args),
        logger=logger,
    )
    print(f"Fit written to: {path}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run_command("causal_fit", args, run)


if __name__ == "__main__":
    sys.exit(main())
