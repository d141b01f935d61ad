#!/usr/bin/env python3
"""
Single entry point for the causal discovery command-line tools.

Usage:
    python main.py simulate studies/demo --compounds 3 --edges 3
    python main.py explore studies/demo
    python main.py fit studies/demo --graph graph.csv
    python main.py score studies/demo --graph consensus.csv learned.csv
    python main.py search studies/demo --max-edges 3
    python main.py stability studies/demo --runs 50
"""

import argparse
import sys

import causal_explore
import causal_fit
import causal_score
import causal_search
import causal_simulate
import causal_stability
from cli_common import run_command

COMMANDS = {
    "simulate": (causal_simulate, "Generate a simulated study"),
    "explore": (causal_explore, "KS table of every condition against the baseline"),
    "fit": (causal_fit, "MAP-fit a given graph"),
    "score": (causal_score, "Laplace log-evidence of given graphs"),
    "search": (causal_search, "Greedy structure search"),
    "stability": (causal_stability, "Stability selection of edges"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Cyclic causal discovery from observational and interventional equilibrium data."
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (module, help_text) in COMMANDS.items():
        module.build_parser(subparsers.add_parser(name, help=help_text, description=help_text))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    module, _ = COMMANDS[args.command]
    return run_command(f"causal_{args.command}", args, module.run, getattr(module, "validate", None))


if __name__ == "__main__":
    sys.exit(main())
