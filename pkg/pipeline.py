"""
Core pipeline logic for the causal discovery application.
This module acts as a facade, orchestrating the workflow by delegating
to the specialized pipeline modules.
"""

from causal_utils import setup_logging
from discovery_pipeline import (
    default_design,
    explore_study,
    fit_study_graph,
    score_study_graphs,
    search_study,
    simulate_to_disk,
    stability_study,
    sweep_study,
)
from search_pipeline import (
    exhaustive_search,
    greedy_search,
    max_edges_sweep,
    score_structure,
    stability_selection,
)

# Explicitly export symbols to prevent linters from removing them
__all__ = [
    "default_design",
    "explore_study",
    "fit_study_graph",
    "score_study_graphs",
    "search_study",
    "simulate_to_disk",
    "stability_study",
    "sweep_study",
    "exhaustive_search",
    "greedy_search",
    "max_edges_sweep",
    "score_structure",
    "stability_selection",
    "setup_logging",
]
