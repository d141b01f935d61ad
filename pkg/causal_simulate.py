#!/usr/bin/env python3
"""
CLI wrapper for generating a simulated study with a known ground truth.

Usage:
    python causal_simulate.py studies/demo --compounds 3 --edges 3 --samples 500 [--acyclic-truth] [--graph truth.csv] [--design design.csv]
"""

import argparse
import sys
from pathlib import Path

import config
from cli_common import add_workspace_arguments, resolve_study_dir, run_command
from likelihood import NoiseModel
from pipeline import simulate_to_disk


def build_parser(parser: argparse.ArgumentParser = None) -> argparse.ArgumentParser:
    if parser is None:
        parser = argparse.ArgumentParser(
            description="Simulate equilibrium data from a random linear cyclic causal model."
        )
    parser.add_argument("output", type=Path, help="Study directory to create; a bare name goes under <workspace>/studies")
    parser.add_argument("--compounds", type=int, default=3, help="Number of compounds (default: 3)")
    parser.add_argument("--edges", type=int, default=3, help="Number of true edges (default: 3)")
    parser.add_argument(
        "--samples", type=int, default=500, help="Samples per condition (default: 500)"
    )
    parser.add_argument(
        "--acyclic-truth", action="store_true", help="Draw an acyclic ground-truth graph"
    )
    parser.add_argument(
        "--graph", type=Path, default=None,
        help="Ground-truth edge list (source,target over x1..xD) instead of a random graph",
    )
    parser.add_argument(
        "--design", type=Path, default=None,
        help="Design file (default: observational + one activity intervention per compound)",
    )
    parser.add_argument(
        "--noise",
        choices=[m.value for m in NoiseModel],
        default=NoiseModel.GAUSSIAN.value,
        help="Disturbance distribution (default: gaussian)",
    )
    parser.add_argument(
        "--magnitude", type=float, default=config.SIMULATION_MAGNITUDE,
        help=f"Intervention perturbation scale (default: {config.SIMULATION_MAGNITUDE})",
    )
    parser.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")
    add_workspace_arguments(parser)
    return parser


def validate(args: argparse.Namespace) -> config.ValidationResult:
    result = config.ValidationResult()
    if args.compounds < 1:
        result.add_error(f"--compounds must be at least 1, got {args.compounds}")
    if args.edges < 0:
        result.add_error(f"--edges must be nonnegative, got {args.edges}")
    if args.samples < 0:
        result.add_error(f"--samples must be nonnegative, got {args.samples}")
    if args.magnitude <= 0:
        result.add_error(f"--magnitude must be positive, got {args.magnitude}")
    if args.graph is not None and args.acyclic_truth:
        result.add_error("--acyclic-truth cannot be combined with --graph")
    return result


def run(args: argparse.Namespace, logger) -> None:
    out_dir = resolve_study_dir(args.output)
    simulate_to_disk(
        out_dir=out_dir,
        d=args.compounds,
        n_edges=args.edges,
        n_samples=args.samples,
        design_path=args.design,
        graph_path=args.graph,
        acyclic=args.acyclic_truth,
        noise=NoiseModel(args.noise),
        magnitude=args.magnitude,
        seed=args.seed,
        logger=logger,
    )
    print(f"Simulated study written to: {out_dir}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run_command("causal_simulate", args, run, validate)


if __name__ == "__main__":
    sys.exit(main())
