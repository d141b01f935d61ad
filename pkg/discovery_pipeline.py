"""
Pipeline module orchestrating the causal discovery workflow on disk:
simulate a study, explore it, fit or score given graphs, search for the best
graph and assess edge stability. Each step reads a study directory, logs its
progress and writes a versioned JSON result record (plus graph exports).
"""

from pathlib import Path
from typing import Optional, Sequence

import config
from causal_graph import ExperimentDesign, Intervention, derive_mechanism_labels
from causal_utils import setup_logging, write_record
from graph_export import export_graph
from inference import FitOptions, PriorConfig, map_fit
from likelihood import NoiseModel
from search_pipeline import (
    StructureConstraints,
    StructureScorer,
    greedy_search,
    max_edges_sweep,
    stability_selection,
)
from simulation import generate_study, ground_truth_for_graph, random_ground_truth
from study_io import (
    Study,
    explore,
    export_study,
    load_graph,
    load_study,
    parse_design,
    read_design_table,
    save_graph,
    write_ks_table,
)

# Helpers


def _study_stem(study_dir: Path) -> str:
    return Path(study_dir).resolve().name


def _output_path(out_dir: Optional[Path], study_dir: Path, suffix: str) -> Path:
    out_dir = Path(out_dir) if out_dir else config.RESULTS_DIR
    return out_dir / f"{_study_stem(study_dir)}{suffix}"


def _study_header(study: Study) -> dict:
    return {
        "study": _study_stem(study.source) if study.source else None,
        "compounds": list(study.compound_names),
        "conditions": list(study.design.names),
        "samples_per_condition": [int(x.shape[0]) for x in study.data],
        "censor_threshold": study.censor_threshold,
    }


def default_design(d: int, names: Sequence[str]) -> ExperimentDesign:
    """Observational baseline followed by one activity intervention per compound."""
    conditions = [Intervention.observational()]
    labels = ["observational"]
    for i in range(d):
        conditions.append(Intervention.activity(i))
        labels.append(f"activity {names[i]}")
    return ExperimentDesign(tuple(conditions), tuple(labels))


def simulate_to_disk(
    out_dir: Path,
    d: int,
    n_edges: int,
    n_samples: int,
    design_path: Optional[Path] = None,
    graph_path: Optional[Path] = None,
    acyclic: bool = False,
    noise: NoiseModel = NoiseModel.GAUSSIAN,
    magnitude: float = config.SIMULATION_MAGNITUDE,
    seed: int = 0,
    logger=None,
) -> Path:
    """
    Generate a simulated study and write it in the on-disk study format,
    together with its ground-truth graph and parameters.
    """
    if logger is None:
        logger = setup_logging("simulate_to_disk")
    names = tuple(f"x{i + 1}" for i in range(d))
    if graph_path is not None:
        truth = ground_truth_for_graph(load_graph(graph_path, names), seed, noise)
    else:
        truth = random_ground_truth(d, n_edges, acyclic, seed, noise)

    if design_path is not None:
        design = parse_design(read_design_table(design_path), names, design_path)
    else:
        design = default_design(d, names)

    sim = generate_study(truth, design, n_samples, magnitude, seed)
    out_dir = Path(out_dir)
    export_study(Study.from_simulation(sim, names), out_dir)
    save_graph(out_dir / config.TRUTH_GRAPH_FILENAME, truth.graph, names)
    write_record(
        out_dir / config.TRUTH_PARAMETERS_FILENAME,
        "truth",
        {
            "compounds": list(names),
            "edges": truth.graph.named_edges(names),
            "noise": truth.noise.value,
            "seed": seed,
            "magnitude": magnitude,
            "conditions": [
                {"name": name, "b": p.b, "mu": p.mu, "a": p.a}
                for name, p in zip(design.names, sim.per_condition_models)
            ],
        },
    )
    logger.info("Simulated study written to: %s (truth %s)", out_dir, truth.graph)
    return out_dir


def explore_study(
    study_dir: Path,
    out_dir: Optional[Path] = None,
    design_path: Optional[Path] = None,
    censor_threshold: Optional[float] = None,
    logger=None,
) -> Path:
    """Write the condition-by-compound table of KS -log p-values against condition 1."""
    if logger is None:
        logger = setup_logging("explore_study")
    study = load_study(study_dir, design_path, censor_threshold)
    for c, row in enumerate(study.censor_fractions):
        worst = int(row.argmax())
        if row[worst] > 0:
            logger.info(
                "Condition %d: up to %.1f%% censored (%s)",
                c + 1, 100 * row[worst], study.compound_names[worst],
            )
    path = _output_path(out_dir, study_dir, config.SUFFIX_EXPLORE)
    write_ks_table(path, explore(study), study)
    logger.info("KS table written to: %s", path)
    return path


def fit_study_graph(
    study_dir: Path,
    graph_path: Path,
    prior: PriorConfig,
    noise: NoiseModel,
    fit_options: FitOptions,
    out_dir: Optional[Path] = None,
    design_path: Optional[Path] = None,
    censor_threshold: Optional[float] = None,
    settings: Optional[dict] = None,
    logger=None,
) -> Path:
    """MAP-fit one graph and write its per-condition parameters."""
    if logger is None:
        logger = setup_logging("fit_study_graph")
    study = load_study(study_dir, design_path, censor_threshold)
    graph = load_graph(graph_path, study.compound_names)
    labeling = derive_mechanism_labels(graph, study.design)
    fit = map_fit(graph, labeling, study.data, study.design, prior, noise, fit_options)
    if not fit.converged:
        logger.warning(
            "Optimizer did not reach the gradient tolerance (|g| = %.3e)",
            fit.gradient_norm_at_solution,
        )
    names = study.compound_names
    payload = {
        **_study_header(study),
        "settings": settings or {},
        "graph": graph.named_edges(names),
        "mechanism_labels": labeling.labels,
        "mechanism_counts": labeling.counts,
        "neg_log_posterior": fit.neg_log_posterior,
        "converged": fit.converged,
        "gradient_norm": fit.gradient_norm_at_solution,
        "iterations": fit.iterations,
        "objective_trace": fit.objective_trace,
        "restart_values": fit.restart_values,
        "parameters": [
            {"condition": name, "b": p.b, "mu": p.mu, "a": p.a}
            for name, p in zip(study.design.names, fit.params.per_condition)
        ],
    }
    path = write_record(_output_path(out_dir, study_dir, config.SUFFIX_FIT), "fit", payload)
    logger.info("Fit (neg log posterior %.4f) written to: %s", fit.neg_log_posterior, path)
    return path


def score_study_graphs(
    study_dir: Path,
    graph_paths: Sequence[Path],
    prior: PriorConfig,
    noise: NoiseModel,
    constraints: StructureConstraints,
    fit_options: FitOptions,
    out_dir: Optional[Path] = None,
    design_path: Optional[Path] = None,
    censor_threshold: Optional[float] = None,
    settings: Optional[dict] = None,
    logger=None,
) -> Path:
    """Laplace log-evidence of each user-supplied graph."""
    if logger is None:
        logger = setup_logging("score_study_graphs")
    study = load_study(study_dir, design_path, censor_threshold)
    scorer = StructureScorer(study.data, study.design, prior, noise, constraints, fit_options)
    scores = []
    for graph_path in graph_paths:
        graph = load_graph(graph_path, study.compound_names)
        scored = scorer.score(graph)
        logger.info("%s: log evidence %.4f", Path(graph_path).name, scored.score)
        scores.append(
            {"graph_file": Path(graph_path).name, **scored.to_payload(study.compound_names)}
        )
    payload = {**_study_header(study), "settings": settings or {}, "scores": scores}
    path = write_record(_output_path(out_dir, study_dir, config.SUFFIX_SCORES), "scores", payload)
    logger.info("Scores written to: %s", path)
    return path


def search_study(
    study_dir: Path,
    prior: PriorConfig,
    noise: NoiseModel,
    constraints: StructureConstraints,
    fit_options: FitOptions,
    restarts: int = config.SEARCH_RESTARTS,
    seed: int = 0,
    workers: int = 1,
    out_dir: Optional[Path] = None,
    design_path: Optional[Path] = None,
    censor_threshold: Optional[float] = None,
    settings: Optional[dict] = None,
    logger=None,
) -> Path:
    """Greedy structure search; writes the run report, best graph and its DOT rendering."""
    if logger is None:
        logger = setup_logging("search_study")
    study = load_study(study_dir, design_path, censor_threshold)
    result = greedy_search(
        study.data, study.design, prior, noise, constraints, restarts, seed, fit_options, workers
    )
    names = study.compound_names
    payload = {**_study_header(study), "settings": settings or {}, **result.to_payload(names)}
    path = write_record(_output_path(out_dir, study_dir, config.SUFFIX_SEARCH), "search", payload)
    save_graph(_output_path(out_dir, study_dir, config.SUFFIX_BEST_GRAPH), result.best.graph, names)
    export_graph(
        result.best.graph, _output_path(out_dir, study_dir, config.SUFFIX_SEARCH_DOT), names
    )
    logger.info("Search report written to: %s", path)
    return path


def sweep_study(
    study_dir: Path,
    max_edges_values: Sequence[int],
    prior: PriorConfig,
    noise: NoiseModel,
    fit_options: FitOptions,
    require_acyclic: bool = False,
    restarts: int = config.SEARCH_RESTARTS,
    seed: int = 0,
    workers: int = 1,
    out_dir: Optional[Path] = None,
    design_path: Optional[Path] = None,
    censor_threshold: Optional[float] = None,
    settings: Optional[dict] = None,
    logger=None,
) -> Path:
    """Local-optimum scores of repeated greedy searches for each edge budget."""
    if logger is None:
        logger = setup_logging("sweep_study")
    study = load_study(study_dir, design_path, censor_threshold)
    points = max_edges_sweep(
        study.data, study.design, prior, noise, max_edges_values,
        require_acyclic, restarts, seed, fit_options, workers,
    )
    for point in points:
        logger.info(
            "max_edges=%d: best %.4f over %d restart(s)",
            point.max_edges, point.result.best.score, len(point.result.restarts),
        )
    payload = {
        **_study_header(study),
        "settings": settings or {},
        "points": [p.to_payload(study.compound_names) for p in points],
    }
    path = write_record(_output_path(out_dir, study_dir, config.SUFFIX_SWEEP), "sweep", payload)
    logger.info("Sweep written to: %s", path)
    return path


def stability_study(
    study_dir: Path,
    prior: PriorConfig,
    noise: NoiseModel,
    constraints: StructureConstraints,
    fit_options: FitOptions,
    n_runs: int = config.STABILITY_RUNS,
    subsample_fraction: float = config.STABILITY_SUBSAMPLE_FRACTION,
    restarts: int = config.STABILITY_RESTARTS,
    seed: int = 0,
    workers: int = 1,
    min_frequency: float = 0.0,
    out_dir: Optional[Path] = None,
    design_path: Optional[Path] = None,
    censor_threshold: Optional[float] = None,
    settings: Optional[dict] = None,
    logger=None,
) -> Path:
    """Stability selection; writes edge frequencies and a frequency-weighted DOT graph."""
    if logger is None:
        logger = setup_logging("stability_study")
    study = load_study(study_dir, design_path, censor_threshold)
    freqs = stability_selection(
        study.data, study.design, prior, noise, constraints, n_runs,
        subsample_fraction, seed, restarts, fit_options, workers,
    )
    if freqs.failed_runs:
        logger.warning("%d of %d stability runs failed", freqs.failed_runs, n_runs)
    names = study.compound_names
    payload = {**_study_header(study), "settings": settings or {}, **freqs.to_payload(names)}
    path = write_record(
        _output_path(out_dir, study_dir, config.SUFFIX_STABILITY), "stability", payload
    )
    export_graph(
        freqs, _output_path(out_dir, study_dir, config.SUFFIX_STABILITY_DOT), names,
        min_frequency=min_frequency,
    )
    logger.info("Edge frequencies written to: %s", path)
    return path
