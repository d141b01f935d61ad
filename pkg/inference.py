"""
MAP fitting and Laplace-approximated evidence for a fixed causal graph.

The negative log posterior U(theta) = nll + prior is minimized with BFGS
(analytic gradients, Wolfe line search). The evidence is then approximated
around the mode theta* by

    log p(data | G) ~ -U(theta*) + (d / 2) log(2 pi) - (1/2) log det H

where H is the Hessian of U at theta*, obtained by central differences of the
analytic gradient. Non positive-definite Hessians are repaired by flooring
their eigenvalues and flagged on the result.

Usage:
    from inference import FitOptions, laplace_log_evidence
    evidence = laplace_log_evidence(graph, data, design, LinearPriorConfig(),
                                    NoiseModel.GAUSSIAN, FitOptions())
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np
from scipy import optimize

import config
from causal_graph import (
    ExperimentDesign,
    Graph,
    MechanismLabeling,
    derive_mechanism_labels,
    sorted_parents,
)
from causal_utils import CausalDiscoveryError
from likelihood import (
    ConditionParameters,
    NoiseModel,
    ParameterLayout,
    ParameterSet,
    SingularMatrixError,
    nll_and_gradient,
)
from priors import (
    GpMechanismPrior,
    GpPriorConfig,
    LinearPriorConfig,
    TyingMap,
    linear_prior_neg_logpdf,
)

logger = logging.getLogger(__name__)

PriorConfig = Union[LinearPriorConfig, GpPriorConfig]
ValueAndGrad = Callable[[np.ndarray], Tuple[float, np.ndarray]]

LOG_2PI = math.log(2.0 * math.pi)


class AllRestartsFailedError(CausalDiscoveryError):
    """Every optimizer restart started at a singular parameter point."""


@dataclass(frozen=True)
class FitOptions:
    max_iterations: int = config.FIT_MAX_ITERATIONS
    gradient_tolerance: float = config.FIT_GRADIENT_TOLERANCE
    restarts: int = config.FIT_RESTARTS
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations <= 0:
            raise ValueError(f"max_iterations must be positive, got {self.max_iterations}")
        if self.gradient_tolerance <= 0:
            raise ValueError(f"gradient_tolerance must be positive, got {self.gradient_tolerance}")
        if self.restarts <= 0:
            raise ValueError(f"restarts must be positive, got {self.restarts}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(eq=False)
class FitResult:
    params: ParameterSet
    neg_log_posterior: float
    converged: bool
    gradient_norm_at_solution: float
    free_vector: np.ndarray = field(repr=False)
    objective_trace: List[float] = field(default_factory=list, repr=False)
    iterations: int = 0
    restart_values: List[float] = field(default_factory=list)


@dataclass(eq=False)
class EvidenceResult:
    log_evidence: float
    map: FitResult
    hessian_log_det: float
    parameter_count: int
    hessian_floored: bool = False
    hessian_asymmetry: float = 0.0
    parameter_std: np.ndarray = field(default=None, repr=False)


def compound_means(data: Sequence[np.ndarray], d: int) -> np.ndarray:
    """K x D matrix of per-condition column means (zeros for empty conditions)."""
    means = np.zeros((len(data), d))
    for c, x in enumerate(data):
        x = np.asarray(x, dtype=float)
        if x.shape[0]:
            means[c] = x.mean(axis=0)
    return means


class PosteriorObjective:
    """
    Negative log posterior of one graph as a function of its free vector.

    With the linear prior the free vector is the tied (reduced) vector of
    mechanism blocks; with the GP prior it is the full per-condition vector.
    A singular I - B maps to +inf with a zero gradient so line searches back off.
    """

    def __init__(
        self,
        graph: Graph,
        labeling: MechanismLabeling,
        data: Sequence[np.ndarray],
        design: ExperimentDesign,
        prior: PriorConfig,
        noise: NoiseModel,
    ):
        if design.k != len(data):
            raise ValueError(f"design has {design.k} conditions but {len(data)} data matrices")
        for c, x in enumerate(data):
            if np.asarray(x).ndim != 2 or np.asarray(x).shape[1] != graph.d:
                raise ValueError(
                    f"condition {c + 1} data must have {graph.d} columns, got shape {np.shape(x)}"
                )
        self.graph = graph
        self.labeling = labeling
        self.data = [np.asarray(x, dtype=float) for x in data]
        self.prior = prior
        self.noise = NoiseModel(noise)
        self.layout = ParameterLayout(graph, design.k)
        self.tying = None
        self.gp = None
        if isinstance(prior, LinearPriorConfig):
            self.tying = TyingMap(graph, labeling)
            self.size = self.tying.size
        elif isinstance(prior, GpPriorConfig):
            self.gp = GpMechanismPrior(
                graph, labeling, compound_means(self.data, graph.d), prior
            )
            self.size = self.layout.size
        else:
            raise TypeError(f"unsupported prior configuration: {prior!r}")
        self.underdetermined_labels = self._underdetermined_labels()

    def _underdetermined_labels(self) -> List[Tuple[int, int, int]]:
        """(compound, label, rows) for mechanisms with too few rows to pin down a noise scale."""
        thin = []
        for i in range(self.graph.d):
            n_parents = len(sorted_parents(self.graph, i))
            for m in range(1, int(self.labeling.counts[i]) + 1):
                rows = sum(self.data[c].shape[0] for c in self.labeling.conditions_with_label(i, m))
                if 0 < rows <= n_parents + 1:
                    thin.append((i, m, rows))
        return thin

    def full_vector(self, theta: np.ndarray) -> np.ndarray:
        return self.tying.expand(theta) if self.tying is not None else np.asarray(theta, float)

    def to_parameters(self, theta: np.ndarray) -> ParameterSet:
        return self.layout.unpack(self.full_vector(theta))

    def value_and_grad(self, theta: np.ndarray) -> Tuple[float, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        params = self.to_parameters(theta)
        try:
            nll, grad_full = nll_and_gradient(self.data, params, self.noise)
        except SingularMatrixError:
            return math.inf, np.zeros_like(theta)

        if self.tying is not None:
            prior_value, prior_grad = linear_prior_neg_logpdf(theta, self.tying, self.prior)
            return nll + prior_value, self.tying.contract(grad_full) + prior_grad
        prior_value, prior_grad = self.gp.neg_logpdf_and_grad(theta)
        return nll + prior_value, grad_full + prior_grad

    def initial_vector(self) -> np.ndarray:
        """
        Ridge regression of every compound on its parents, pooled over the
        conditions sharing a mechanism label; mu and a from the residuals.
        """
        d, k = self.graph.d, self.layout.k
        b = np.zeros((k, d, d))
        mu = np.zeros((k, d))
        a = np.zeros((k, d))
        for i in range(d):
            pa = sorted_parents(self.graph, i)
            for m in range(1, int(self.labeling.counts[i]) + 1):
                conds = self.labeling.conditions_with_label(i, m)
                rows = np.vstack([self.data[c] for c in conds])
                if rows.shape[0] == 0:
                    continue
                y = rows[:, i]
                coef = np.zeros(len(pa))
                if pa:
                    xp = rows[:, pa]
                    xc = xp - xp.mean(axis=0)
                    yc = y - y.mean()
                    gram = xc.T @ xc + config.RIDGE_PENALTY * rows.shape[0] * np.eye(len(pa))
                    coef = np.linalg.solve(gram, xc.T @ yc)
                    resid = y - xp @ coef
                else:
                    resid = y
                scale = max(float(resid.std()), config.MIN_INIT_SCALE)
                for c in conds:
                    b[c, pa, i] = coef
                    mu[c, i] = resid.mean()
                    a[c, i] = math.log(scale)
        params = ParameterSet(
            self.graph,
            tuple(ConditionParameters(b[c], mu[c], a[c]) for c in range(k)),
        )
        full = self.layout.pack(params)
        return self.tying.reduce(full) if self.tying is not None else full


def neg_log_posterior(
    free_vector: np.ndarray,
    g: Graph,
    labeling: MechanismLabeling,
    data: Sequence[np.ndarray],
    design: ExperimentDesign,
    prior: PriorConfig,
    noise: NoiseModel,
) -> Tuple[float, np.ndarray]:
    """Negative log posterior and its gradient at `free_vector`."""
    return PosteriorObjective(g, labeling, data, design, prior, noise).value_and_grad(free_vector)


def _minimize(objective: PosteriorObjective, start: np.ndarray, opts: FitOptions) -> FitResult:
    trace: List[float] = []

    def record(intermediate_result):
        trace.append(float(intermediate_result.fun))

    start_value, _ = objective.value_and_grad(start)
    trace.append(float(start_value))
    result = optimize.minimize(
        objective.value_and_grad,
        start,
        jac=True,
        method="BFGS",
        callback=record,
        options={"maxiter": opts.max_iterations, "gtol": opts.gradient_tolerance},
    )
    gradient_norm = float(np.max(np.abs(result.jac))) if result.jac.size else 0.0
    converged = bool(np.isfinite(result.fun) and gradient_norm <= opts.gradient_tolerance)
    if not converged:
        logger.debug(
            "BFGS stopped without reaching gradient tolerance (|g|=%.3e): %s",
            gradient_norm, result.message,
        )
    return FitResult(
        params=objective.to_parameters(result.x),
        neg_log_posterior=float(result.fun),
        converged=converged,
        gradient_norm_at_solution=gradient_norm,
        free_vector=np.array(result.x),
        objective_trace=trace,
        iterations=int(result.nit),
    )


def _fit_objective(objective: PosteriorObjective, opts: FitOptions) -> FitResult:
    for i, m, rows in getattr(objective, "underdetermined_labels", ()):
        # residuals can be fit exactly, so log alpha runs off toward -inf
        logger.warning(
            "Mechanism %d of compound %d has %d sample row(s); its noise scale is not "
            "identified and the fit for %s may not converge",
            m, i + 1, rows, objective.graph,
        )
    x0 = objective.initial_vector()
    best = None
    restart_values = []
    for r in range(opts.restarts):
        if r == 0:
            start = x0
        else:
            rng = np.random.default_rng([opts.seed, r])
            start = x0 + config.INIT_PERTURBATION_SCALE * rng.standard_normal(x0.size)
        value, _ = objective.value_and_grad(start)
        if not math.isfinite(value):
            logger.debug("Restart %d starts at a singular point; skipped", r)
            restart_values.append(math.inf)
            continue
        result = _minimize(objective, start, opts)
        restart_values.append(result.neg_log_posterior)
        if best is None or result.neg_log_posterior < best.neg_log_posterior:
            best = result

    if best is None:
        raise AllRestartsFailedError(
            f"all {opts.restarts} restart(s) for {objective.graph} started at a singular I - B"
        )
    best.restart_values = restart_values
    return best


def map_fit(
    g: Graph,
    labeling: MechanismLabeling,
    data: Sequence[np.ndarray],
    design: ExperimentDesign,
    prior: PriorConfig,
    noise: NoiseModel,
    opts: FitOptions,
) -> FitResult:
    """Best MAP estimate over `opts.restarts` BFGS runs."""
    objective = PosteriorObjective(g, labeling, data, design, prior, noise)
    return _fit_objective(objective, opts)


@dataclass(eq=False)
class LaplaceTerms:
    neg_log_posterior: float
    log_evidence: float
    hessian: np.ndarray
    hessian_log_det: float
    floored: bool
    asymmetry: float
    parameter_std: np.ndarray


def finite_difference_hessian(
    fun: ValueAndGrad, x: np.ndarray, relative_step: float = config.HESSIAN_RELATIVE_STEP
) -> np.ndarray:
    """Central differences of the analytic gradient, column by column (unsymmetrized)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    hessian = np.empty((n, n))
    for k in range(n):
        h = relative_step * max(1.0, abs(x[k]))
        xp = x.copy()
        xm = x.copy()
        xp[k] += h
        xm[k] -= h
        fp, gp = fun(xp)
        fm, gm = fun(xm)
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise SingularMatrixError(
                f"Hessian step along coordinate {k} reaches a singular I - B"
            )
        hessian[:, k] = (gp - gm) / (2.0 * h)
    return hessian


def laplace_from_objective(
    fun: ValueAndGrad, x_map: np.ndarray, relative_step: float = config.HESSIAN_RELATIVE_STEP
) -> LaplaceTerms:
    """Laplace approximation of log int exp(-U) around the mode `x_map` of U."""
    x_map = np.asarray(x_map, dtype=float)
    value, _ = fun(x_map)
    n = x_map.size
    if n == 0:
        return LaplaceTerms(value, -value, np.zeros((0, 0)), 0.0, False, 0.0, np.zeros(0))

    raw = finite_difference_hessian(fun, x_map, relative_step)
    scale = float(np.max(np.abs(raw)))
    asymmetry = float(np.max(np.abs(raw - raw.T))) / scale if scale > 0 else 0.0
    hessian = 0.5 * (raw + raw.T)

    eigenvalues, eigenvectors = np.linalg.eigh(hessian)
    floor = config.HESSIAN_EIGEN_FLOOR * max(float(eigenvalues.max()), np.finfo(float).tiny)
    floored = bool(eigenvalues.min() < floor)
    if floored:
        logger.warning(
            "Hessian not positive definite at the mode (smallest eigenvalue %.3e); "
            "flooring %d eigenvalue(s)",
            eigenvalues.min(), int(np.sum(eigenvalues < floor)),
        )
        eigenvalues = np.maximum(eigenvalues, floor)
    log_det = float(np.sum(np.log(eigenvalues)))
    variances = (eigenvectors ** 2) @ (1.0 / eigenvalues)
    log_evidence = -value + 0.5 * n * LOG_2PI - 0.5 * log_det
    return LaplaceTerms(value, log_evidence, hessian, log_det, floored, asymmetry, np.sqrt(variances))


def laplace_log_evidence(
    g: Graph,
    data: Sequence[np.ndarray],
    design: ExperimentDesign,
    prior: PriorConfig,
    noise: NoiseModel,
    opts: FitOptions,
) -> EvidenceResult:
    """Derive labels, fit the MAP and return its Laplace log-evidence."""
    labeling = derive_mechanism_labels(g, design)
    objective = PosteriorObjective(g, labeling, data, design, prior, noise)
    fit = _fit_objective(objective, opts)
    terms = laplace_from_objective(objective.value_and_grad, fit.free_vector)
    n = objective.size
    log_evidence = -fit.neg_log_posterior + 0.5 * n * LOG_2PI - 0.5 * terms.hessian_log_det
    logger.debug(
        "Evidence for %s: %.4f (d=%d, converged=%s, floored=%s)",
        g, log_evidence, n, fit.converged, terms.floored,
    )
    return EvidenceResult(
        log_evidence=log_evidence,
        map=fit,
        hessian_log_det=terms.hessian_log_det,
        parameter_count=n,
        hessian_floored=terms.floored,
        hessian_asymmetry=terms.asymmetry,
        parameter_std=terms.parameter_std,
    )
