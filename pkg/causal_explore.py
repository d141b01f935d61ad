#!/usr/bin/env python3
"""
CLI wrapper for the exploratory KS table: for every condition and compound,
-log p of the two-sample Kolmogorov-Smirnov test against condition 1.

Usage:
    python causal_explore.py studies/demo [--design design.csv] [--censor-threshold 1.0]
"""

import argparse
import sys

from cli_common import add_study_arguments, add_workspace_arguments, output_dir, run_command
from pipeline import explore_study


def build_parser(parser: argparse.ArgumentParser = None) -> argparse.ArgumentParser:
    if parser is None:
        parser = argparse.ArgumentParser(
            description="Compare every condition with the observational baseline."
        )
    add_study_arguments(parser)
    add_workspace_arguments(parser)
    return parser


def run(args: argparse.Namespace, logger) -> None:
    path = explore_study(
        args.study_dir,
        out_dir=output_dir(args),
        design_path=args.design,
        censor_threshold=args.censor_threshold,
        logger=logger,
    )
    print(f"KS table written to: {path}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run_command("causal_explore", args, run)


if __name__ == "__main__":
    sys.exit(main())
