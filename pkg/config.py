"""
Configuration for the cyclic causal discovery pipeline.
This module holds the workspace paths, which the CLI can redirect at runtime,
and the stateless numerical defaults used by every other module.

Paths live on a singleton `ProjectSettings`; direct access such as
`config.RESULTS_DIR` is proxied to the singleton so callers always see the
current workspace.
"""

import os
from pathlib import Path
from typing import List, Union

from dotenv import load_dotenv

load_dotenv()


class ProjectSettings:
    """
    Singleton class to manage workspace paths.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(ProjectSettings, cls).__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if getattr(self, "_initialized", False):
            return

        self.WORKSPACE_BASE = Path(os.getenv("CAUSAL_WORKSPACE", "."))
        self._update_derived_paths()
        self._initialized = True

    def _update_derived_paths(self):
        """Update paths derived from WORKSPACE_BASE."""
        self.STUDIES_DIR = self.WORKSPACE_BASE / "studies"
        self.RESULTS_DIR = self.WORKSPACE_BASE / "results"
        self.LOGS_DIR = self.WORKSPACE_BASE / "logs"
        self.TEMPLATES_DIR = Path(__file__).parent / "templates"
        self.DESIGNS_DIR = Path(__file__).parent / "designs"

    def set_workspace_base(self, path: Union[str, Path]):
        """Update the workspace directory and all related paths."""
        self.WORKSPACE_BASE = Path(path)
        self._update_derived_paths()


# Initialize the singleton
settings = ProjectSettings()


def __getattr__(name):
    # Only reached for names not defined on the module itself.
    if hasattr(settings, name):
        return getattr(settings, name)
    raise AttributeError(f"module '{__name__}' has no attribute '{name}'")


def set_workspace_base(path: Union[str, Path]):
    """Global function to update the singleton settings."""
    settings.set_workspace_base(path)


# ============================================================================
# CONSTANTS (Stateless)
# ============================================================================

# File names inside a study directory
DESIGN_FILENAME = "design.csv"
MANIFEST_FILENAME = "study.json"
CONDITION_FILE_PATTERN = "condition_{index:02d}.csv"
TRUTH_GRAPH_FILENAME = "truth_graph.csv"
TRUTH_PARAMETERS_FILENAME = "truth_parameters.json"

# Result file suffixes (written as RESULTS_DIR / f"{study name}{suffix}")
SUFFIX_FIT = " - fit.json"
SUFFIX_SCORES = " - scores.json"
SUFFIX_SEARCH = " - search.json"
SUFFIX_SWEEP = " - sweep.json"
SUFFIX_STABILITY = " - stability.json"
SUFFIX_EXPLORE = " - ks.csv"
SUFFIX_BEST_GRAPH = " - best graph.csv"
SUFFIX_SEARCH_DOT = " - search.dot"
SUFFIX_STABILITY_DOT = " - stability.dot"

RESULT_SCHEMA_VERSION = 1

# Preprocessing
CENSOR_THRESHOLD = 1.0
KS_NEG_LOG_P_CEILING = 745.0  # -log of the smallest positive double

# Parameter priors (linear mechanisms prior and GP prior)
LINEAR_PRIOR_LAMBDA = 10.0
# Stand-in for an infinite location/scale prior width. A proper prior keeps
# evidences comparable across structures with different parameter counts.
LINEAR_PRIOR_TAU = 1e3
GP_SIGMA_IN = 10.0
GP_SIGMA_OUT = 10.0
GP_SIGMA_JITTER = 0.01

# Likelihood
SINGULAR_TOLERANCE = 1e-12

# MAP fitting
FIT_MAX_ITERATIONS = 500
FIT_GRADIENT_TOLERANCE = 1e-4
FIT_RESTARTS = 1
INIT_PERTURBATION_SCALE = 0.1
RIDGE_PENALTY = 1e-3
MIN_INIT_SCALE = 1e-3

# Laplace approximation
HESSIAN_RELATIVE_STEP = 1e-4
HESSIAN_EIGEN_FLOOR = 1e-8

# Structure search
SEARCH_RESTARTS = 5
STABILITY_RUNS = 50
STABILITY_SUBSAMPLE_FRACTION = 0.5
STABILITY_RESTARTS = 2

# Simulation
ABUNDANCE_CLAMP_SCALE = 0.01
SIMULATION_MAX_ATTEMPTS = 10
SIMULATION_MAGNITUDE = 1.0
SIMULATION_COEFFICIENT_SCALE = 0.8

# Graph export
DOT_MAX_PENWIDTH = 5.0
DOT_MIN_PENWIDTH = 0.5


# ============================================================================
# CONFIGURATION VALIDATION
# ============================================================================

class ValidationResult:
    """Stores validation results with errors and warnings."""

    def __init__(self):
        self.errors: List[str] = []
        self.warnings: List[str] = []

    def add_error(self, message: str):
        """Add a critical error that prevents operation."""
        self.errors.append(message)

    def add_warning(self, message: str):
        """Add a warning that should be reviewed but doesn't prevent operation."""
        self.warnings.append(message)

    def is_valid(self) -> bool:
        """Returns True if no errors (warnings are allowed)."""
        return len(self.errors) == 0

    def format_report(self) -> str:
        """Format a human-readable validation report."""
        lines = []

        if self.errors:
            lines.append("=" * 70)
            lines.append("CONFIGURATION ERRORS")
            lines.append("=" * 70)
            for i, error in enumerate(self.errors, 1):
                lines.append(f"{i}. {error}")
            lines.append("")

        if self.warnings:
            lines.append("=" * 70)
            lines.append("CONFIGURATION WARNINGS")
            lines.append("=" * 70)
            for i, warning in enumerate(self.warnings, 1):
                lines.append(f"{i}. {warning}")
            lines.append("")

        if not self.errors and not self.warnings:
            lines.append("Configuration validation passed - no issues found.")

        return "\n".join(lines)


def validate_configuration(verbose: bool = True, auto_fix: bool = False) -> ValidationResult:
    """
    Validates all configuration settings for correctness and consistency.

    Args:
        verbose: If True, print validation report to stdout
        auto_fix: If True, create missing workspace directories

    Returns:
        ValidationResult with any errors and warnings found
    """
    result = ValidationResult()

    # ========================================================================
    # 1. VALIDATE DIRECTORY PATHS
    # ========================================================================

    if not settings.WORKSPACE_BASE.exists():
        if auto_fix:
            try:
                settings.WORKSPACE_BASE.mkdir(parents=True, exist_ok=True)
                result.add_warning(f"Created WORKSPACE_BASE directory: {settings.WORKSPACE_BASE}")
            except OSError as e:
                result.add_error(
                    f"WORKSPACE_BASE does not exist and cannot be created: {settings.WORKSPACE_BASE}\n"
                    f"  Error: {e}\n"
                    f"  Fix: Set CAUSAL_WORKSPACE environment variable or ensure directory is writable"
                )
        else:
            result.add_error(
                f"WORKSPACE_BASE directory does not exist: {settings.WORKSPACE_BASE}\n"
                f"  Fix: Create directory or set CAUSAL_WORKSPACE environment variable\n"
                f"  Example: export CAUSAL_WORKSPACE=/path/to/workspace"
            )
    elif not settings.WORKSPACE_BASE.is_dir():
        result.add_error(
            f"WORKSPACE_BASE exists but is not a directory: {settings.WORKSPACE_BASE}\n"
            f"  Fix: Remove file and create directory, or choose different location"
        )
    elif not os.access(settings.WORKSPACE_BASE, os.W_OK):
        result.add_warning(
            f"WORKSPACE_BASE is not writable: {settings.WORKSPACE_BASE}\n"
            f"  Results and logs cannot be written\n"
            f"  Fix: chmod +w {settings.WORKSPACE_BASE}"
        )

    derived_dirs = {
        "STUDIES_DIR": settings.STUDIES_DIR,
        "RESULTS_DIR": settings.RESULTS_DIR,
        "LOGS_DIR": settings.LOGS_DIR,
    }

    for name, path in derived_dirs.items():
        if not path.exists():
            if auto_fix:
                try:
                    path.mkdir(parents=True, exist_ok=True)
                    result.add_warning(f"Created {name}: {path}")
                except OSError as e:
                    result.add_error(
                        f"{name} does not exist and cannot be created: {path}\n"
                        f"  Error: {e}\n"
                        f"  Fix: Ensure parent directory {settings.WORKSPACE_BASE} is writable"
                    )
            else:
                result.add_warning(
                    f"{name} does not exist: {path}\n"
                    f"  Will be created automatically when needed\n"
                    f"  Or run: validate_configuration(auto_fix=True)"
                )

    if not (settings.TEMPLATES_DIR / "graph.dot.j2").exists():
        result.add_error(
            f"Graph template missing: {settings.TEMPLATES_DIR / 'graph.dot.j2'}\n"
            f"  DOT export will fail without it"
        )

    # ========================================================================
    # 2. VALIDATE NUMERIC RANGES
    # ========================================================================

    positive_values = {
        "LINEAR_PRIOR_LAMBDA": LINEAR_PRIOR_LAMBDA,
        "LINEAR_PRIOR_TAU": LINEAR_PRIOR_TAU,
        "GP_SIGMA_IN": GP_SIGMA_IN,
        "GP_SIGMA_OUT": GP_SIGMA_OUT,
        "GP_SIGMA_JITTER": GP_SIGMA_JITTER,
        "SINGULAR_TOLERANCE": SINGULAR_TOLERANCE,
        "FIT_GRADIENT_TOLERANCE": FIT_GRADIENT_TOLERANCE,
        "INIT_PERTURBATION_SCALE": INIT_PERTURBATION_SCALE,
        "RIDGE_PENALTY": RIDGE_PENALTY,
        "HESSIAN_RELATIVE_STEP": HESSIAN_RELATIVE_STEP,
        "HESSIAN_EIGEN_FLOOR": HESSIAN_EIGEN_FLOOR,
        "ABUNDANCE_CLAMP_SCALE": ABUNDANCE_CLAMP_SCALE,
        "SIMULATION_MAGNITUDE": SIMULATION_MAGNITUDE,
        "DOT_MAX_PENWIDTH": DOT_MAX_PENWIDTH,
    }

    for name, value in positive_values.items():
        if not isinstance(value, (int, float)) or value <= 0:
            result.add_error(
                f"{name} must be a positive number, got: {value}\n"
                f"  Fix: Set to a strictly positive value"
            )

    positive_counts = {
        "FIT_MAX_ITERATIONS": FIT_MAX_ITERATIONS,
        "FIT_RESTARTS": FIT_RESTARTS,
        "SEARCH_RESTARTS": SEARCH_RESTARTS,
        "STABILITY_RUNS": STABILITY_RUNS,
        "STABILITY_RESTARTS": STABILITY_RESTARTS,
        "SIMULATION_MAX_ATTEMPTS": SIMULATION_MAX_ATTEMPTS,
        "RESULT_SCHEMA_VERSION": RESULT_SCHEMA_VERSION,
    }

    for name, value in positive_counts.items():
        if not isinstance(value, int) or value <= 0:
            result.add_error(
                f"{name} must be a positive integer, got: {value}\n"
                f"  Fix: Set to a reasonable count (e.g., 1, 5, 50)"
            )

    if not (0.0 < STABILITY_SUBSAMPLE_FRACTION < 1.0):
        result.add_error(
            f"STABILITY_SUBSAMPLE_FRACTION must lie strictly between 0 and 1, "
            f"got: {STABILITY_SUBSAMPLE_FRACTION}"
        )

    if CENSOR_THRESHOLD < 0:
        result.add_error(
            f"CENSOR_THRESHOLD must be nonnegative (0 disables censoring), got: {CENSOR_THRESHOLD}"
        )

    if DOT_MIN_PENWIDTH <= 0 or DOT_MIN_PENWIDTH > DOT_MAX_PENWIDTH:
        result.add_error(
            f"DOT_MIN_PENWIDTH must be positive and at most DOT_MAX_PENWIDTH, "
            f"got: {DOT_MIN_PENWIDTH} (max {DOT_MAX_PENWIDTH})"
        )

    if LINEAR_PRIOR_TAU < 100:
        result.add_warning(
            f"LINEAR_PRIOR_TAU is small: {LINEAR_PRIOR_TAU}\n"
            f"  Location and log-scale parameters will be shrunk noticeably\n"
            f"  Consider: keep it large relative to the spread of log-abundances"
        )

    if GP_SIGMA_JITTER > 0.1 * GP_SIGMA_OUT:
        result.add_warning(
            f"GP_SIGMA_JITTER ({GP_SIGMA_JITTER}) is large relative to GP_SIGMA_OUT ({GP_SIGMA_OUT})\n"
            f"  The GP coupling between conditions will be weak"
        )

    if verbose:
        print(result.format_report())

    return result
