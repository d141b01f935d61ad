"""
Pipeline module for structure search over causal graphs.

Graphs are scored by their Laplace log-evidence under a flat structure prior
over the admissible set (at most `max_edges` edges, optionally acyclic).
Search is best-improvement hill climbing over single-edge additions,
deletions and reversals, restarted from seeded random admissible graphs.
Stability selection reruns the search on row subsamples and reports how often
each edge is selected.

Usage:
    from search_pipeline import StructureConstraints, greedy_search
    result = greedy_search(data, design, LinearPriorConfig(), NoiseModel.GAUSSIAN,
                           StructureConstraints(max_edges=3), restarts=5, seed=0)
"""

import itertools
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

import config
from causal_graph import ExperimentDesign, Graph, is_acyclic
from causal_utils import CausalDiscoveryError
from inference import EvidenceResult, FitOptions, PriorConfig, laplace_log_evidence
from likelihood import NoiseModel

logger = logging.getLogger(__name__)

# Above this many ordered pairs brute-force enumeration is refused
MAX_ENUMERATION_PAIRS = 20


class ConstraintError(CausalDiscoveryError, ValueError):
    """A graph outside the admissible set was submitted for scoring."""


class SearchFailedError(CausalDiscoveryError):
    """No restart (or no stability run) produced a scored structure."""


@dataclass(frozen=True)
class StructureConstraints:
    max_edges: Optional[int] = None
    require_acyclic: bool = False

    def __post_init__(self):
        if self.max_edges is not None and self.max_edges < 0:
            raise ValueError(f"max_edges must be nonnegative, got {self.max_edges}")

    def admits(self, g: Graph) -> bool:
        if self.max_edges is not None and g.edge_count > self.max_edges:
            return False
        return not self.require_acyclic or is_acyclic(g)

    def edge_budget(self, d: int) -> int:
        """Largest edge count an admissible graph on d compounds can have."""
        budget = d * (d - 1) // 2 if self.require_acyclic else d * (d - 1)
        if self.max_edges is not None:
            budget = min(budget, self.max_edges)
        return budget

    def describe(self) -> dict:
        return {"max_edges": self.max_edges, "require_acyclic": self.require_acyclic}


@dataclass(eq=False)
class ScoredStructure:
    graph: Graph
    evidence: EvidenceResult = field(repr=False)
    score: float

    def to_payload(self, names: Sequence[str]) -> dict:
        fit = self.evidence.map
        return {
            "edges": self.graph.named_edges(names),
            "edge_count": self.graph.edge_count,
            "score": self.score,
            "log_evidence": self.evidence.log_evidence,
            "neg_log_posterior": fit.neg_log_posterior,
            "parameter_count": self.evidence.parameter_count,
            "converged": fit.converged,
            "hessian_floored": self.evidence.hessian_floored,
        }


@dataclass(eq=False)
class EdgeFrequencies:
    freq: np.ndarray
    runs: int
    failed_runs: int = 0
    selected: List[Graph] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.freq = np.asarray(self.freq, dtype=float)
        if self.runs <= 0:
            raise ValueError(f"runs must be positive, got {self.runs}")
        if np.any(np.diag(self.freq) != 0):
            raise ValueError("edge frequencies must have a zero diagonal")
        if np.any(self.freq < 0) or np.any(self.freq > 1):
            raise ValueError("edge frequencies must lie in [0, 1]")

    def to_payload(self, names: Sequence[str]) -> dict:
        return {
            "compounds": list(names),
            "frequencies": self.freq,
            "runs": self.runs,
            "failed_runs": self.failed_runs,
            "selected": [g.named_edges(names) for g in self.selected],
        }


@dataclass(eq=False)
class RestartTrace:
    restart: int
    start: Graph
    best: ScoredStructure
    steps: int
    path_scores: List[float] = field(default_factory=list)


@dataclass(eq=False)
class SearchResult:
    best: ScoredStructure
    restarts: List[RestartTrace]
    failed_restarts: int = 0
    evaluations: int = 0

    @property
    def local_optimum_scores(self) -> List[float]:
        return [trace.best.score for trace in self.restarts]

    def to_payload(self, names: Sequence[str]) -> dict:
        return {
            "best": self.best.to_payload(names),
            "failed_restarts": self.failed_restarts,
            "evaluations": self.evaluations,
            "restarts": [
                {
                    "restart": t.restart,
                    "start_edges": t.start.named_edges(names),
                    "local_optimum_edges": t.best.graph.named_edges(names),
                    "local_optimum_score": t.best.score,
                    "steps": t.steps,
                    "path_scores": t.path_scores,
                }
                for t in self.restarts
            ],
        }


# Helpers


def _compound_count(data: Sequence[np.ndarray]) -> int:
    if not data:
        raise ValueError("at least one condition is required")
    return int(np.asarray(data[0]).shape[1])


def _map_ordered(fn: Callable, items: Sequence, workers: int) -> list:
    """Apply fn to every item, optionally on a thread pool; results keep item order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def neighbors(g: Graph, constraints: StructureConstraints) -> List[Graph]:
    """
    Admissible graphs one edge addition, deletion or reversal away from g.

    Ordered by the pair (i, j) lexicographically, then add < delete < reverse.
    Reversing i -> j is skipped when j -> i is already present.
    """
    out = []
    for i in range(g.d):
        for j in range(g.d):
            if i == j:
                continue
            if (i, j) in g.edges:
                moves = [g.without_edge(i, j)]
                if (j, i) not in g.edges:
                    moves.append(g.reversed_edge(i, j))
            else:
                moves = [g.with_edge(i, j)]
            out.extend(m for m in moves if constraints.admits(m))
    return out


def random_admissible_graph(
    d: int, constraints: StructureConstraints, rng: np.random.Generator
) -> Graph:
    """
    Draw an edge count uniformly up to the budget, then add edges in random
    order, rejecting those that close a cycle when acyclicity is required.
    """
    pairs = [(i, j) for i in range(d) for j in range(d) if i != j]
    target = int(rng.integers(0, constraints.edge_budget(d) + 1))
    g = Graph(d)
    for k in rng.permutation(len(pairs)):
        if g.edge_count == target:
            break
        candidate = g.with_edge(*pairs[int(k)])
        if constraints.require_acyclic and not is_acyclic(candidate):
            continue
        g = candidate
    return g


class StructureScorer:
    """
    Evidence scores for graphs on one dataset, cached by canonical graph key.

    The cache is shared between threads; scores are deterministic so
    concurrent inserts of the same key are harmless.
    """

    _FAILED = object()

    def __init__(
        self,
        data: Sequence[np.ndarray],
        design: ExperimentDesign,
        prior: PriorConfig,
        noise: NoiseModel,
        constraints: StructureConstraints,
        fit_options: Optional[FitOptions] = None,
        _cache: Optional[Dict] = None,
        _lock: Optional[threading.Lock] = None,
    ):
        self.data = [np.asarray(x, dtype=float) for x in data]
        self.design = design
        self.prior = prior
        self.noise = NoiseModel(noise)
        self.constraints = constraints
        self.fit_options = fit_options or FitOptions()
        self._cache = {} if _cache is None else _cache
        self._lock = threading.Lock() if _lock is None else _lock
        self.evaluations = 0

    def with_constraints(self, constraints: StructureConstraints) -> "StructureScorer":
        """A scorer for a different admissible set sharing this one's cache."""
        return StructureScorer(
            self.data, self.design, self.prior, self.noise, constraints,
            self.fit_options, _cache=self._cache, _lock=self._lock,
        )

    @property
    def cache_size(self) -> int:
        with self._lock:
            return len(self._cache)

    def score(self, g: Graph) -> ScoredStructure:
        """
        Raises:
            ConstraintError: if g is not admissible
            CausalDiscoveryError: if the evidence cannot be computed
        """
        if not self.constraints.admits(g):
            raise ConstraintError(
                f"{g} is not admissible under {self.constraints.describe()}"
            )
        key = g.key()
        with self._lock:
            cached = self._cache.get(key)
        if isinstance(cached, ScoredStructure):
            return cached
        if cached is self._FAILED:
            raise SearchFailedError(f"evidence for {g} could not be computed")

        try:
            evidence = laplace_log_evidence(
                g, self.data, self.design, self.prior, self.noise, self.fit_options
            )
        except CausalDiscoveryError:
            with self._lock:
                self._cache[key] = self._FAILED
            raise
        # flat structure prior over the admissible set
        scored = ScoredStructure(g, evidence, evidence.log_evidence)
        with self._lock:
            self._cache[key] = scored
            self.evaluations += 1
        return scored

    def try_score(self, g: Graph) -> Optional[ScoredStructure]:
        """Score g, or log the failure and return None."""
        try:
            return self.score(g)
        except ConstraintError:
            raise
        except CausalDiscoveryError as e:
            logger.warning("Skipping %s: %s", g, e)
            return None


def _hill_climb(
    scorer: StructureScorer, start: Graph, restart: int
) -> RestartTrace:
    current = scorer.try_score(start)
    if current is None:
        raise SearchFailedError(f"restart {restart}: starting graph {start} could not be scored")
    path = [current.score]
    steps = 0
    while True:
        best = None
        for candidate in neighbors(current.graph, scorer.constraints):
            scored = scorer.try_score(candidate)
            if scored is None or scored.score <= current.score:
                continue
            if best is None or scored.score > best.score:
                best = scored
        if best is None:
            break
        current = best
        steps += 1
        path.append(current.score)
    return RestartTrace(restart, start, current, steps, path)


def greedy_search(
    data: Sequence[np.ndarray],
    design: ExperimentDesign,
    prior: PriorConfig,
    noise: NoiseModel,
    constraints: StructureConstraints,
    restarts: int = config.SEARCH_RESTARTS,
    seed: int = 0,
    fit_options: Optional[FitOptions] = None,
    workers: int = 1,
    scorer: Optional[StructureScorer] = None,
) -> SearchResult:
    """
    Best-improvement hill climbing from `restarts` random admissible graphs.

    Raises:
        SearchFailedError: if every restart fails
    """
    if restarts <= 0:
        raise ValueError(f"restarts must be positive, got {restarts}")
    d = _compound_count(data)
    if scorer is None:
        scorer = StructureScorer(data, design, prior, noise, constraints, fit_options)

    def run(r: int) -> Optional[RestartTrace]:
        rng = np.random.default_rng([seed, r])
        start = random_admissible_graph(d, constraints, rng)
        try:
            trace = _hill_climb(scorer, start, r)
        except SearchFailedError as e:
            logger.warning("Restart %d failed: %s", r, e)
            return None
        logger.info(
            "Restart %d: local optimum %.4f after %d step(s), %d edge(s)",
            r, trace.best.score, trace.steps, trace.best.graph.edge_count,
        )
        return trace

    results = _map_ordered(run, list(range(restarts)), workers)
    traces = [t for t in results if t is not None]
    if not traces:
        raise SearchFailedError(f"all {restarts} restart(s) failed")

    best = traces[0].best
    for trace in traces[1:]:
        if trace.best.score > best.score:
            best = trace.best
    logger.info("Best structure: %s (score %.4f)", best.graph, best.score)
    return SearchResult(best, traces, restarts - len(traces), scorer.evaluations)


def score_structure(
    g: Graph,
    data: Sequence[np.ndarray],
    design: ExperimentDesign,
    prior: PriorConfig,
    noise: NoiseModel,
    constraints: Optional[StructureConstraints] = None,
    fit_options: Optional[FitOptions] = None,
) -> ScoredStructure:
    """Evidence score of one user-supplied graph."""
    scorer = StructureScorer(
        data, design, prior, noise, constraints or StructureConstraints(), fit_options
    )
    return scorer.score(g)


def enumerate_admissible_graphs(d: int, constraints: StructureConstraints) -> Iterator[Graph]:
    """Every admissible graph on d compounds, by edge count then lexicographic edge set."""
    pairs = [(i, j) for i in range(d) for j in range(d) if i != j]
    if len(pairs) > MAX_ENUMERATION_PAIRS:
        raise ValueError(
            f"exhaustive enumeration over {len(pairs)} ordered pairs is infeasible"
        )
    for n in range(constraints.edge_budget(d) + 1):
        for edges in itertools.combinations(pairs, n):
            g = Graph(d, frozenset(edges))
            if constraints.admits(g):
                yield g


def exhaustive_search(
    data: Sequence[np.ndarray],
    design: ExperimentDesign,
    prior: PriorConfig,
    noise: NoiseModel,
    constraints: StructureConstraints,
    fit_options: Optional[FitOptions] = None,
    scorer: Optional[StructureScorer] = None,
) -> Tuple[ScoredStructure, List[ScoredStructure]]:
    """Score every admissible graph; returns the best and all scored graphs."""
    d = _compound_count(data)
    if scorer is None:
        scorer = StructureScorer(data, design, prior, noise, constraints, fit_options)
    candidates = enumerate_admissible_graphs(d, constraints)
    scored = [s for s in map(scorer.try_score, candidates) if s is not None]
    if not scored:
        raise SearchFailedError("no admissible graph could be scored")
    best = scored[0]
    for s in scored[1:]:
        if s.score > best.score:
            best = s
    logger.info(
        "Exhaustive search over %d graphs: best %s (%.4f)",
        len(scored), best.graph, best.score,
    )
    return best, scored


@dataclass(eq=False)
class SweepPoint:
    max_edges: int
    result: SearchResult

    def to_payload(self, names: Sequence[str]) -> dict:
        return {
            "max_edges": self.max_edges,
            "local_optimum_scores": self.result.local_optimum_scores,
            "best": self.result.best.to_payload(names),
        }


def max_edges_sweep(
    data: Sequence[np.ndarray],
    design: ExperimentDesign,
    prior: PriorConfig,
    noise: NoiseModel,
    max_edges_values: Sequence[int],
    require_acyclic: bool = False,
    restarts: int = config.SEARCH_RESTARTS,
    seed: int = 0,
    fit_options: Optional[FitOptions] = None,
    workers: int = 1,
) -> List[SweepPoint]:
    """Greedy search for each edge budget; the evidence cache is shared across budgets."""
    shared = None
    points = []
    for n in max_edges_values:
        constraints = StructureConstraints(max_edges=int(n), require_acyclic=require_acyclic)
        scorer = (
            StructureScorer(data, design, prior, noise, constraints, fit_options)
            if shared is None
            else shared.with_constraints(constraints)
        )
        shared = scorer
        result = greedy_search(
            data, design, prior, noise, constraints, restarts, seed,
            fit_options, workers, scorer,
        )
        points.append(SweepPoint(int(n), result))
    return points


def subsample_rows(
    data: Sequence[np.ndarray], fraction: float, rng: np.random.Generator
) -> List[np.ndarray]:
    """floor(fraction * N_c) rows of each condition, drawn without replacement, order kept."""
    out = []
    for x in data:
        x = np.asarray(x, dtype=float)
        m = int(math.floor(fraction * x.shape[0]))
        rows = np.sort(rng.choice(x.shape[0], size=m, replace=False))
        out.append(x[rows])
    return out


def stability_selection(
    data: Sequence[np.ndarray],
    design: ExperimentDesign,
    prior: PriorConfig,
    noise: NoiseModel,
    constraints: StructureConstraints,
    n_runs: int = config.STABILITY_RUNS,
    subsample_fraction: float = config.STABILITY_SUBSAMPLE_FRACTION,
    seed: int = 0,
    restarts: int = config.STABILITY_RESTARTS,
    fit_options: Optional[FitOptions] = None,
    workers: int = 1,
) -> EdgeFrequencies:
    """
    Edge selection frequencies over `n_runs` subsampled greedy searches.

    Runs that fail entirely are excluded; `runs` counts the successful ones.

    Raises:
        SearchFailedError: if no run succeeds
    """
    if n_runs < 1:
        raise ValueError(f"n_runs must be at least 1, got {n_runs}")
    if not 0 < subsample_fraction < 1:
        raise ValueError(f"subsample_fraction must lie in (0, 1), got {subsample_fraction}")
    d = _compound_count(data)

    def run(r: int) -> Optional[Graph]:
        rng = np.random.default_rng([seed, r])
        subsample = subsample_rows(data, subsample_fraction, rng)
        run_seed = int(rng.integers(2 ** 63))
        try:
            result = greedy_search(
                subsample, design, prior, noise, constraints, restarts, run_seed, fit_options
            )
        except SearchFailedError as e:
            logger.warning("Stability run %d failed: %s", r, e)
            return None
        logger.info("Stability run %d/%d: %s", r + 1, n_runs, result.best.graph)
        return result.best.graph

    selected = [g for g in _map_ordered(run, list(range(n_runs)), workers) if g is not None]
    if not selected:
        raise SearchFailedError(f"all {n_runs} stability run(s) failed")
    counts = np.zeros((d, d))
    for g in selected:
        counts += g.adjacency()
    return EdgeFrequencies(counts / len(selected), len(selected), n_runs - len(selected), selected)
