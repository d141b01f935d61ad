"""
Shared argparse options, flag validation and error handling for the CLI scripts.

Every subcommand accepts the same model options (seed, noise model, prior and
its hyperparameters, structure constraints, optimizer settings). Invalid flag
combinations are rejected before any data is read, using the same
`ValidationResult` as the configuration check.
"""

import argparse
import dataclasses
import logging
from pathlib import Path
from typing import Callable, Optional

import config
from causal_utils import CausalDiscoveryError, emit_error_record, setup_logging
from inference import FitOptions, PriorConfig
from likelihood import NoiseModel
from priors import GpPriorConfig, LinearPriorConfig
from search_pipeline import StructureConstraints

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

LINEAR_FLAGS = ("lam", "tau")
GP_FLAGS = ("sigma_in", "sigma_out", "sigma_jitter")


class ArgumentError(CausalDiscoveryError, ValueError):
    """Rejected command-line flag combination."""


def add_workspace_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--workspace",
        type=Path,
        default=None,
        help=f"Workspace for results and logs (default: {config.WORKSPACE_BASE})",
    )
    parser.add_argument(
        "--output-dir",
        type=Path,
        default=None,
        help="Directory for result files (default: <workspace>/results)",
    )


def add_study_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "study_dir",
        type=Path,
        help="Study directory (design.csv + condition tables); a bare name is looked up in <workspace>/studies",
    )
    parser.add_argument(
        "--design",
        type=Path,
        default=None,
        help="Design file (default: <study_dir>/design.csv)",
    )
    parser.add_argument(
        "--censor-threshold",
        type=float,
        default=None,
        help=f"Detection limit theta, 0 disables censoring (default: manifest or {config.CENSOR_THRESHOLD})",
    )


def add_model_arguments(parser: argparse.ArgumentParser) -> None:
    """Seed, noise model, prior, constraints and optimizer options."""
    parser.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")
    parser.add_argument(
        "--noise",
        choices=[m.value for m in NoiseModel],
        default=NoiseModel.GAUSSIAN.value,
        help="Disturbance distribution (default: gaussian)",
    )
    parser.add_argument(
        "--prior", choices=["linear", "gp"], default="linear", help="Mechanism prior (default: linear)"
    )
    parser.add_argument(
        "--lambda", dest="lam", type=float, default=None,
        help=f"Linear prior: coefficient precision (default: {config.LINEAR_PRIOR_LAMBDA})",
    )
    parser.add_argument(
        "--tau", type=float, default=None,
        help=f"Linear prior: location/log-scale spread (default: {config.LINEAR_PRIOR_TAU})",
    )
    parser.add_argument(
        "--sigma-in", type=float, default=None,
        help=f"GP prior: input length scale (default: {config.GP_SIGMA_IN})",
    )
    parser.add_argument(
        "--sigma-out", type=float, default=None,
        help=f"GP prior: output scale (default: {config.GP_SIGMA_OUT})",
    )
    parser.add_argument(
        "--sigma-jitter", type=float, default=None,
        help=f"GP prior: jitter (default: {config.GP_SIGMA_JITTER})",
    )
    parser.add_argument(
        "--max-edges", type=int, default=None, help="Maximum number of edges (default: unbounded)"
    )
    parser.add_argument(
        "--acyclic", action="store_true", help="Restrict to acyclic graphs"
    )
    parser.add_argument(
        "--max-iterations", type=int, default=config.FIT_MAX_ITERATIONS,
        help=f"BFGS iteration limit (default: {config.FIT_MAX_ITERATIONS})",
    )
    parser.add_argument(
        "--gradient-tolerance", type=float, default=config.FIT_GRADIENT_TOLERANCE,
        help=f"BFGS gradient tolerance (default: {config.FIT_GRADIENT_TOLERANCE})",
    )
    parser.add_argument(
        "--fit-restarts", type=int, default=config.FIT_RESTARTS,
        help=f"Optimizer restarts per graph (default: {config.FIT_RESTARTS})",
    )
    parser.add_argument(
        "--workers", type=int, default=1, help="Worker threads for restarts/runs (default: 1)"
    )


def validate_model_arguments(args: argparse.Namespace) -> config.ValidationResult:
    """Check flag values and combinations; errors block execution."""
    result = config.ValidationResult()

    if getattr(args, "prior", None) == "linear":
        stray = [f for f in GP_FLAGS if getattr(args, f, None) is not None]
        if stray:
            result.add_error(f"GP hyperparameter flag(s) {stray} given with --prior linear")
    elif getattr(args, "prior", None) == "gp":
        stray = [f for f in LINEAR_FLAGS if getattr(args, f, None) is not None]
        if stray:
            result.add_error(f"linear-prior flag(s) {stray} given with --prior gp")

    for name in LINEAR_FLAGS + GP_FLAGS + ("gradient_tolerance",):
        value = getattr(args, name, None)
        if value is not None and value <= 0:
            result.add_error(f"--{name.replace('_', '-')} must be positive, got {value}")

    for name in ("max_iterations", "fit_restarts", "workers"):
        value = getattr(args, name, None)
        if value is not None and value < 1:
            result.add_error(f"--{name.replace('_', '-')} must be at least 1, got {value}")

    seed = getattr(args, "seed", 0)
    if not 0 <= seed < 2 ** 63:
        result.add_error(f"--seed must be a nonnegative 63-bit integer, got {seed}")

    max_edges = getattr(args, "max_edges", None)
    if max_edges is not None and max_edges < 0:
        result.add_error(f"--max-edges must be nonnegative, got {max_edges}")

    threshold = getattr(args, "censor_threshold", None)
    if threshold is not None and threshold < 0:
        result.add_error(f"--censor-threshold must be nonnegative, got {threshold}")

    return result


def build_prior(args: argparse.Namespace) -> PriorConfig:
    if args.prior == "gp":
        return GpPriorConfig(
            sigma_in=args.sigma_in if args.sigma_in is not None else config.GP_SIGMA_IN,
            sigma_out=args.sigma_out if args.sigma_out is not None else config.GP_SIGMA_OUT,
            sigma_jitter=(
                args.sigma_jitter if args.sigma_jitter is not None else config.GP_SIGMA_JITTER
            ),
        )
    return LinearPriorConfig(
        lam=args.lam if args.lam is not None else config.LINEAR_PRIOR_LAMBDA,
        tau=args.tau if args.tau is not None else config.LINEAR_PRIOR_TAU,
    )


def build_fit_options(args: argparse.Namespace) -> FitOptions:
    return FitOptions(
        max_iterations=args.max_iterations,
        gradient_tolerance=args.gradient_tolerance,
        restarts=args.fit_restarts,
        seed=args.seed,
    )


def build_constraints(args: argparse.Namespace) -> StructureConstraints:
    return StructureConstraints(max_edges=args.max_edges, require_acyclic=args.acyclic)


def model_description(args: argparse.Namespace) -> dict:
    """Settings echoed into every result record."""
    prior = build_prior(args)
    return {
        "seed": args.seed,
        "noise": args.noise,
        "prior": args.prior,
        "prior_hyperparameters": dataclasses.asdict(prior),
        "constraints": build_constraints(args).describe(),
        "fit": {
            "max_iterations": args.max_iterations,
            "gradient_tolerance": args.gradient_tolerance,
            "restarts": args.fit_restarts,
        },
    }


def resolve_study_dir(path: Path) -> Path:
    """Bare study names that are not local directories live under <workspace>/studies."""
    path = Path(path)
    if path.is_absolute() or len(path.parts) != 1 or path.exists():
        return path
    return config.STUDIES_DIR / path


def output_dir(args: argparse.Namespace) -> Path:
    return args.output_dir if getattr(args, "output_dir", None) else config.RESULTS_DIR


def run_command(
    script_name: str,
    args: argparse.Namespace,
    command: Callable[[argparse.Namespace, logging.Logger], None],
    validate: Optional[Callable[[argparse.Namespace], config.ValidationResult]] = None,
) -> int:
    """
    Validate flags, set up logging and run `command`.

    Failures are logged and reported on stderr as a JSON error record.

    Returns:
        Process exit code
    """
    if getattr(args, "workspace", None):
        config.set_workspace_base(args.workspace)

    validation = validate_model_arguments(args)
    if validate is not None:
        extra = validate(args)
        validation.errors.extend(extra.errors)
        validation.warnings.extend(extra.warnings)
    if not validation.is_valid():
        emit_error_record(ArgumentError("; ".join(validation.errors)))
        return EXIT_USAGE

    if getattr(args, "study_dir", None) is not None:
        args.study_dir = resolve_study_dir(args.study_dir)

    logger = setup_logging(script_name)
    for warning in validation.warnings:
        logger.warning(warning)
    try:
        command(args, logger)
    except (CausalDiscoveryError, OSError, ValueError) as e:
        logger.error("%s failed: %s", script_name, e, exc_info=True)
        emit_error_record(e)
        return EXIT_FAILURE
    return EXIT_OK
