"""
Synthetic equilibrium data from linear cyclic structural causal models.

Each condition's data solves X (I - B) = 1 mu^T + E diag(alpha) row by row for
disturbances E drawn from the noise model. Interventions alter the base model
the same way the mechanism labels assume:

    - abundance on i: equation of i replaced by a near-deterministic level,
    - activity on t: the mechanisms of the children of t are perturbed,
    - mechanism set S: the mechanisms of the compounds in S are perturbed.

Everything is driven by numpy Generators seeded from (seed, condition,
attempt), so a study is reproducible from its seed alone.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

import config
from causal_graph import (
    ExperimentDesign,
    Graph,
    Intervention,
    InterventionKind,
    children,
    is_acyclic,
    sorted_parents,
)
from causal_utils import CausalDiscoveryError
from likelihood import ConditionParameters, NoiseModel, SingularMatrixError, log_abs_det_ImB

logger = logging.getLogger(__name__)


class SimulationError(CausalDiscoveryError):
    """No nonsingular intervened model could be drawn within the attempt budget."""


@dataclass(frozen=True, eq=False)
class GroundTruthModel:
    graph: Graph
    base: ConditionParameters
    noise: NoiseModel = NoiseModel.GAUSSIAN

    def __post_init__(self):
        object.__setattr__(self, "noise", NoiseModel(self.noise))
        if self.base.d != self.graph.d:
            raise ValueError(
                f"base parameters have {self.base.d} compounds, graph has {self.graph.d}"
            )
        if not self.base.masked_by(self.graph):
            raise ValueError("base coefficients are nonzero outside the graph's edges")
        # raises SingularMatrixError when no unique equilibrium exists
        log_abs_det_ImB(self.base.b)


@dataclass(frozen=True, eq=False)
class SimulatedStudy:
    design: ExperimentDesign
    per_condition_models: Tuple[ConditionParameters, ...]
    data: Tuple[np.ndarray, ...]
    truth: GroundTruthModel
    seed: int = 0

    @property
    def compound_names(self) -> Tuple[str, ...]:
        return tuple(f"x{i + 1}" for i in range(self.truth.graph.d))


def sample_disturbances(noise: NoiseModel, shape, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. standardized disturbances from p0."""
    if NoiseModel(noise) is NoiseModel.GAUSSIAN:
        return rng.standard_normal(shape)
    # inverse of the CDF (2/pi) arctan(exp(e))
    u = rng.random(shape)
    u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).eps)
    return np.log(np.tan(0.5 * math.pi * u))


def solve_equilibrium(p: ConditionParameters, eps: np.ndarray) -> np.ndarray:
    """
    Rows x solving x^T (I - B) = mu^T + (alpha * eps)^T.

    Raises:
        SingularMatrixError: if I - B is singular
    """
    eps = np.asarray(eps, dtype=float)
    if eps.ndim != 2 or eps.shape[1] != p.d:
        raise ValueError(f"disturbances must have {p.d} columns, got shape {eps.shape}")
    _, (lu, piv) = log_abs_det_ImB(p.b)
    if eps.shape[0] == 0:
        return np.empty((0, p.d))
    rhs = p.mu + eps * p.alpha
    return linalg.lu_solve((lu, piv), rhs.T, trans=1, check_finite=False).T


def _perturb_mechanism(
    g: Graph, b: np.ndarray, mu: np.ndarray, a: np.ndarray, j: int,
    magnitude: float, rng: np.random.Generator,
) -> None:
    pa = sorted_parents(g, j)
    if pa:
        b[pa, j] += magnitude * rng.standard_normal(len(pa))
    mu[j] += magnitude * rng.standard_normal()
    a[j] += magnitude * rng.standard_normal()


def apply_intervention(
    model: GroundTruthModel, iv: Intervention, magnitude: float, rng: np.random.Generator
) -> ConditionParameters:
    """Condition-specific linearization implied by intervention `iv` on the base model."""
    if magnitude <= 0:
        raise ValueError(f"magnitude must be positive, got {magnitude}")
    g = model.graph
    for t in iv.targets:
        if not 0 <= t < g.d:
            raise IndexError(f"intervention target {t} out of range for {g.d} compounds")

    p = model.base.copy()
    if iv.kind is InterventionKind.OBSERVATIONAL:
        return p

    b, mu, a = p.b, p.mu, p.a
    if iv.kind is InterventionKind.ABUNDANCE:
        (i,) = iv.targets
        b[:, i] = 0.0
        mu[i] = mu[i] + magnitude * rng.standard_normal()
        a[i] = math.log(config.ABUNDANCE_CLAMP_SCALE)
        return ConditionParameters(b, mu, a)

    if iv.kind is InterventionKind.ACTIVITY:
        (t,) = iv.targets
        changed = sorted(children(g, t))
    else:
        changed = sorted(iv.targets)
    # one independent stream per changed compound
    base_seed = int(rng.integers(2 ** 63))
    for j in changed:
        _perturb_mechanism(g, b, mu, a, j, magnitude, np.random.default_rng([base_seed, j]))
    return ConditionParameters(b, mu, a)


def generate_study(
    truth: GroundTruthModel,
    design: ExperimentDesign,
    n_per_condition: Union[int, Sequence[int]],
    magnitude: float = config.SIMULATION_MAGNITUDE,
    seed: int = 0,
) -> SimulatedStudy:
    """
    Apply every intervention of `design` and draw equilibrium samples.

    A perturbation that makes I - B singular is redrawn with a new sub-seed,
    up to SIMULATION_MAX_ATTEMPTS times per condition.

    Raises:
        SimulationError: if a condition stays singular after every attempt
    """
    design.validate_for(truth.graph.d)
    if isinstance(n_per_condition, (int, np.integer)):
        sizes = [int(n_per_condition)] * design.k
    else:
        sizes = [int(n) for n in n_per_condition]
    if len(sizes) != design.k or any(n < 0 for n in sizes):
        raise ValueError(f"need {design.k} nonnegative sample sizes, got {sizes}")

    models = []
    data = []
    for c, iv in enumerate(design.conditions):
        for attempt in range(config.SIMULATION_MAX_ATTEMPTS):
            rng = np.random.default_rng([seed, c, attempt])
            p = apply_intervention(truth, iv, magnitude, rng)
            try:
                eps = sample_disturbances(truth.noise, (sizes[c], truth.graph.d), rng)
                x = solve_equilibrium(p, eps)
            except SingularMatrixError:
                logger.debug("Condition %d attempt %d singular; redrawing", c + 1, attempt)
                continue
            break
        else:
            raise SimulationError(
                f"condition {c + 1} ('{design.names[c]}') has a singular I - B after "
                f"{config.SIMULATION_MAX_ATTEMPTS} attempts"
            )
        models.append(p)
        data.append(x)

    logger.info(
        "Simulated %d conditions (%d samples) on %s", design.k, sum(sizes), truth.graph
    )
    return SimulatedStudy(design, tuple(models), tuple(data), truth, seed)


def _draw_parameters(
    graph: Graph, rng: np.random.Generator, noise: NoiseModel, coefficient_scale: float
) -> GroundTruthModel:
    d = graph.d
    for attempt in range(config.SIMULATION_MAX_ATTEMPTS):
        b = np.zeros((d, d))
        for i, j in sorted(graph.edges):
            b[i, j] = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0) * coefficient_scale
        mu = rng.standard_normal(d)
        a = np.log(rng.uniform(0.5, 1.5, d))
        base = ConditionParameters(b, mu, a)
        try:
            return GroundTruthModel(graph, base, noise)
        except SingularMatrixError:
            logger.debug("Ground truth attempt %d singular; redrawing", attempt)
    raise SimulationError(f"no nonsingular coefficients found for {graph}")


def ground_truth_for_graph(
    graph: Graph,
    seed: int = 0,
    noise: NoiseModel = NoiseModel.GAUSSIAN,
    coefficient_scale: float = config.SIMULATION_COEFFICIENT_SCALE,
) -> GroundTruthModel:
    """Random nonsingular base parameters on a given graph."""
    return _draw_parameters(graph, np.random.default_rng(seed), noise, coefficient_scale)


def random_ground_truth(
    d: int,
    n_edges: int,
    acyclic: bool = False,
    seed: int = 0,
    noise: NoiseModel = NoiseModel.GAUSSIAN,
    coefficient_scale: float = config.SIMULATION_COEFFICIENT_SCALE,
) -> GroundTruthModel:
    """Random graph with `n_edges` edges and nonsingular base parameters."""
    rng = np.random.default_rng(seed)
    pairs = [(i, j) for i in range(d) for j in range(d) if i != j]
    if acyclic:
        order = rng.permutation(d)
        rank = {int(v): r for r, v in enumerate(order)}
        pairs = [(i, j) for i, j in pairs if rank[i] < rank[j]]
    if not 0 <= n_edges <= len(pairs):
        raise ValueError(f"cannot place {n_edges} edges, at most {len(pairs)} are available")

    chosen = rng.choice(len(pairs), size=n_edges, replace=False) if n_edges else []
    graph = Graph(d, frozenset(pairs[int(k)] for k in chosen))
    if acyclic and not is_acyclic(graph):
        raise SimulationError(f"drew a cyclic graph under an acyclic order: {graph}")
    return _draw_parameters(graph, rng, noise, coefficient_scale)


def feedback_truth(
    coupling: float = 0.6,
    noise: NoiseModel = NoiseModel.GAUSSIAN,
    mu: Optional[Sequence[float]] = None,
) -> GroundTruthModel:
    """Negative feedback loop on two compounds: x1 activates x2, x2 inhibits x1."""
    b = np.array([[0.0, coupling], [-coupling, 0.0]])
    mu = np.zeros(2) if mu is None else np.asarray(mu, dtype=float)
    graph = Graph(2, frozenset({(0, 1), (1, 0)}))
    return GroundTruthModel(graph, ConditionParameters(b, mu, np.zeros(2)), noise)
