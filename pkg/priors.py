"""
Mechanism-coupling parameter priors.

Two priors couple the per-condition linearizations Theta_i^(c) = (B_.i, mu_i, a_i)
of compound i across conditions that share a mechanism label:

    - linear mechanisms prior: hard equality. Conditions with the same label
      share one parameter block (see `TyingMap`), and each block gets
      N(b | 0, lambda^2) on its slopes and N(0, tau^2) on mu and a.
    - GP prior: soft coupling. Every condition keeps its own block; the blocks
      of one label are read as pseudo-data (function value and slopes at the
      linearization point) of a single latent function under a zero-mean
      Gaussian process with an isotropic squared exponential kernel.

Usage:
    tying = free_parameter_map(graph, labeling)
    value, grad = linear_prior_neg_logpdf(reduced, tying, LinearPriorConfig())

    gp = GpMechanismPrior(graph, labeling, compound_means, GpPriorConfig())
    value, grad = gp.neg_logpdf_and_grad(theta)
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import linalg

import config
from causal_graph import Graph, MechanismLabeling, sorted_parents
from causal_utils import CausalDiscoveryError
from likelihood import ParameterLayout, ParameterSet

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


class NumericalBreakdownError(CausalDiscoveryError, ArithmeticError):
    """A GP covariance matrix is not positive definite even after jitter."""


@dataclass(frozen=True)
class LinearPriorConfig:
    lam: float = config.LINEAR_PRIOR_LAMBDA
    tau: float = config.LINEAR_PRIOR_TAU

    def __post_init__(self):
        if self.lam <= 0 or self.tau <= 0:
            raise ValueError(f"lambda and tau must be positive, got {self.lam}, {self.tau}")


@dataclass(frozen=True)
class GpPriorConfig:
    sigma_in: float = config.GP_SIGMA_IN
    sigma_out: float = config.GP_SIGMA_OUT
    sigma_jitter: float = config.GP_SIGMA_JITTER

    def __post_init__(self):
        if min(self.sigma_in, self.sigma_out, self.sigma_jitter) <= 0:
            raise ValueError(
                "sigma_in, sigma_out and sigma_jitter must be positive, got "
                f"{self.sigma_in}, {self.sigma_out}, {self.sigma_jitter}"
            )


# ============================================================================
# HARD EQUALITY TYING (linear mechanisms prior)
# ============================================================================


@dataclass(frozen=True)
class MechanismBlock:
    """One reduced parameter block Theta_i^m: slopes of the parents, then mu, then a."""

    compound: int
    label: int
    parents: Tuple[int, ...]
    start: int

    @property
    def size(self) -> int:
        return len(self.parents) + 2


class TyingMap:
    """
    Bijection between the reduced vector {Theta_i^m} and the tied full vector.

    `expand` copies every block to all conditions carrying its label;
    `contract` is its adjoint and sums full-vector gradients over tied
    conditions.
    """

    def __init__(self, graph: Graph, labeling: MechanismLabeling):
        d, k = labeling.labels.shape
        if d != graph.d:
            raise ValueError(f"labeling covers {d} compounds, graph has {graph.d}")
        for i in range(d):
            used = set(labeling.labels[i].tolist())
            if used != set(range(1, int(labeling.counts[i]) + 1)):
                raise ValueError(
                    f"labels of compound {i} ({sorted(used)}) do not match its count "
                    f"{int(labeling.counts[i])}"
                )

        self.graph = graph
        self.labeling = labeling
        self.layout = ParameterLayout(graph, k)

        self.blocks: List[MechanismBlock] = []
        offsets: Dict[Tuple[int, int], int] = {}
        start = 0
        for i in range(d):
            pa = tuple(sorted_parents(graph, i))
            for m in range(1, int(labeling.counts[i]) + 1):
                block = MechanismBlock(i, m, pa, start)
                offsets[(i, m)] = start
                self.blocks.append(block)
                start += block.size
        self.size = start

        index = np.empty(self.layout.size, dtype=int)
        for c in range(k):
            base = c * self.layout.block_size
            for e, (p, j) in enumerate(self.layout.edge_order):
                offset = offsets[(j, int(labeling.labels[j, c]))]
                index[base + e] = offset + sorted_parents(graph, j).index(p)
            for j in range(d):
                offset = offsets[(j, int(labeling.labels[j, c]))]
                n_pa = len(sorted_parents(graph, j))
                index[self.layout.mu_slice(c).start + j] = offset + n_pa
                index[self.layout.a_slice(c).start + j] = offset + n_pa + 1
        self.full_to_reduced = index

        kinds = np.empty(self.size, dtype="<U2")
        for block in self.blocks:
            kinds[block.start:block.start + len(block.parents)] = "b"
            kinds[block.start + len(block.parents)] = "mu"
            kinds[block.start + len(block.parents) + 1] = "a"
        self.is_slope = kinds == "b"

    def expand(self, reduced: np.ndarray) -> np.ndarray:
        reduced = np.asarray(reduced, dtype=float)
        if reduced.shape != (self.size,):
            raise ValueError(f"expected a reduced vector of length {self.size}, got {reduced.shape}")
        return reduced[self.full_to_reduced]

    def expand_parameters(self, reduced: np.ndarray) -> ParameterSet:
        return self.layout.unpack(self.expand(reduced))

    def contract(self, full_gradient: np.ndarray) -> np.ndarray:
        return np.bincount(self.full_to_reduced, weights=full_gradient, minlength=self.size)

    def reduce(self, full: np.ndarray) -> np.ndarray:
        """Average a full vector over tied coordinates (a left inverse of `expand`)."""
        counts = np.bincount(self.full_to_reduced, minlength=self.size)
        return self.contract(full) / counts


def free_parameter_map(g: Graph, labeling: MechanismLabeling) -> TyingMap:
    return TyingMap(g, labeling)


def linear_prior_neg_logpdf(
    reduced: np.ndarray, tying: TyingMap, cfg: LinearPriorConfig
) -> Tuple[float, np.ndarray]:
    """
    -log p(Theta) under the linear mechanisms prior, summed over mechanism blocks.

    Slopes ~ N(0, lambda^2); mu and a ~ N(0, tau^2). The density is taken
    directly over a = log alpha, so no Jacobian term appears.
    """
    reduced = np.asarray(reduced, dtype=float)
    var = np.where(tying.is_slope, cfg.lam ** 2, cfg.tau ** 2)
    log_norm = np.where(
        tying.is_slope, math.log(cfg.lam) + 0.5 * LOG_2PI, math.log(cfg.tau) + 0.5 * LOG_2PI
    )
    value = float(np.sum(reduced * reduced / (2.0 * var) + log_norm))
    grad = reduced / var
    return value, grad


# ============================================================================
# GAUSSIAN PROCESS PRIOR ON PSEUDO-DATA
# ============================================================================


@dataclass(frozen=True, eq=False)
class PseudoDatum:
    """
    Linearization of mechanism i in one condition, read as GP observations.

    location: (parent means, 0), the linearization point
    value: mu + sum_j B_ji <x_j>, the function value there
    slopes: (B_ji for j in pa(i), alpha_i)
    """

    location: np.ndarray
    value: float
    slopes: np.ndarray
    condition: int = -1

    def __post_init__(self):
        object.__setattr__(self, "location", np.asarray(self.location, dtype=float))
        object.__setattr__(self, "slopes", np.asarray(self.slopes, dtype=float))
        object.__setattr__(self, "value", float(self.value))
        if self.location.shape != self.slopes.shape:
            raise ValueError(
                f"location {self.location.shape} and slopes {self.slopes.shape} differ in length"
            )


def build_pseudodata(
    params: ParameterSet,
    compound_means: np.ndarray,
    g: Graph,
    labeling: MechanismLabeling,
) -> Dict[Tuple[int, int], List[PseudoDatum]]:
    """
    Pseudo-data per (compound i, label m), one datum per condition with m_ic = m.

    Args:
        compound_means: K x D empirical means of every compound in every
            condition; the parent-mean vectors are read from it.
    """
    compound_means = np.asarray(compound_means, dtype=float)
    result: Dict[Tuple[int, int], List[PseudoDatum]] = {}
    for i in range(g.d):
        pa = sorted_parents(g, i)
        for m in range(1, int(labeling.counts[i]) + 1):
            data = []
            for c in labeling.conditions_with_label(i, m):
                p = params.per_condition[c]
                means = compound_means[c, pa]
                location = np.append(means, 0.0)
                value = p.mu[i] + float(np.dot(p.b[pa, i], means))
                slopes = np.append(p.b[pa, i], math.exp(p.a[i]))
                data.append(PseudoDatum(location, value, slopes, condition=c))
            result[(i, m)] = data
    return result


def gp_kernel_block(
    u: np.ndarray, u2: np.ndarray, cfg: GpPriorConfig
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Covariances between f and its gradient at two locations.

    Returns:
        (cov(f(u), f(u2)), cov(f(u), grad f(u2)), cov(grad f(u), grad f(u2)))
    """
    u = np.asarray(u, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if u.shape != u2.shape:
        raise ValueError(f"locations differ in dimension: {u.shape} vs {u2.shape}")
    ell2 = cfg.sigma_in ** 2
    diff = u - u2
    k = cfg.sigma_out ** 2 * math.exp(-float(diff @ diff) / (2.0 * ell2))
    value_slope = k * diff / ell2
    slope_slope = k * (np.eye(u.shape[0]) / ell2 - np.outer(diff, diff) / ell2 ** 2)
    return k, value_slope, slope_slope


def gp_covariance(locations: np.ndarray, cfg: GpPriorConfig) -> np.ndarray:
    """
    Covariance of the stacked pseudo-data vector (all values, then all slope
    vectors, conditions in order), including the jitter diagonal.
    """
    locations = np.atleast_2d(np.asarray(locations, dtype=float))
    n, q = locations.shape
    size = n * (1 + q)
    cov = np.empty((size, size))
    for a in range(n):
        sa = slice(n + a * q, n + (a + 1) * q)
        for b in range(n):
            sb = slice(n + b * q, n + (b + 1) * q)
            kvv, kvs, kss = gp_kernel_block(locations[a], locations[b], cfg)
            cov[a, b] = kvv
            cov[a, sb] = kvs
            cov[sb, a] = kvs
            cov[sa, sb] = kss
    cov += cfg.sigma_jitter ** 2 * np.eye(size)
    return cov


def _factorize(cov: np.ndarray):
    try:
        return linalg.cho_factor(cov, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalBreakdownError(
            f"GP covariance of size {cov.shape[0]} is not positive definite after jitter: {e}"
        ) from e


def _gaussian_neg_logpdf(y: np.ndarray, cho) -> Tuple[float, np.ndarray]:
    """-log N(y; 0, K) and its gradient K^{-1} y, given the Cholesky factor of K."""
    solved = linalg.cho_solve(cho, y, check_finite=False)
    half_log_det = float(np.sum(np.log(np.diag(cho[0]))))
    value = 0.5 * float(y @ solved) + half_log_det + 0.5 * y.shape[0] * LOG_2PI
    return value, solved


def gp_prior_neg_logpdf(
    pseudodata: Sequence[PseudoDatum], cfg: GpPriorConfig
) -> Tuple[float, List[Tuple[np.ndarray, float, float]]]:
    """
    -log density of one label's pseudo-data under the GP prior, over (B, mu, a).

    The density over the noise slope alpha is converted to a = log alpha, which
    subtracts sum_c a^(c). The gradient is returned per datum as
    (d/dB_pa, d/dmu, d/da).
    """
    if not pseudodata:
        raise ValueError("at least one pseudo-datum is required")
    locations = np.array([p.location for p in pseudodata])
    n, q = locations.shape
    y = np.concatenate([[p.value for p in pseudodata]] + [p.slopes for p in pseudodata])
    cho = _factorize(gp_covariance(locations, cfg))
    value, gy = _gaussian_neg_logpdf(y, cho)

    grads = []
    for c, p in enumerate(pseudodata):
        g_value = gy[c]
        g_slopes = gy[n + c * q:n + (c + 1) * q]
        alpha = p.slopes[-1]
        value -= math.log(alpha)
        d_b = g_value * p.location[:-1] + g_slopes[:-1]
        d_a = g_slopes[-1] * alpha - 1.0
        grads.append((d_b, float(g_value), float(d_a)))
    return value, grads


@dataclass
class _GpLabelTerm:
    compound: int
    label: int
    conditions: List[int]
    parent_means: np.ndarray  # n x |pa|
    b_index: np.ndarray  # n x |pa| positions in the full vector
    mu_index: np.ndarray  # n
    a_index: np.ndarray  # n
    cho: tuple = field(repr=False, default=None)


class GpMechanismPrior:
    """
    GP prior summed over all (compound, label) pairs, evaluated on the full
    per-condition parameter vector.

    Pseudo-data locations depend on the data means only, so every covariance
    matrix is factorized once at construction.
    """

    def __init__(
        self,
        graph: Graph,
        labeling: MechanismLabeling,
        compound_means: np.ndarray,
        cfg: GpPriorConfig,
    ):
        compound_means = np.asarray(compound_means, dtype=float)
        k = labeling.labels.shape[1]
        if compound_means.shape != (k, graph.d):
            raise ValueError(
                f"compound means must be {k} x {graph.d}, got {compound_means.shape}"
            )
        self.graph = graph
        self.cfg = cfg
        self.layout = ParameterLayout(graph, k)
        self.terms: List[_GpLabelTerm] = []
        for i in range(graph.d):
            pa = sorted_parents(graph, i)
            for m in range(1, int(labeling.counts[i]) + 1):
                conditions = labeling.conditions_with_label(i, m)
                means = compound_means[np.ix_(conditions, pa)] if pa else np.zeros((len(conditions), 0))
                b_index = np.array(
                    [[self.layout.b_index(c, p, i) for p in pa] for c in conditions], dtype=int
                ).reshape(len(conditions), len(pa))
                mu_index = np.array([self.layout.mu_slice(c).start + i for c in conditions])
                a_index = np.array([self.layout.a_slice(c).start + i for c in conditions])
                locations = np.hstack([means, np.zeros((len(conditions), 1))])
                cho = _factorize(gp_covariance(locations, cfg))
                self.terms.append(
                    _GpLabelTerm(i, m, conditions, means, b_index, mu_index, a_index, cho)
                )

    def neg_logpdf_and_grad(self, theta: np.ndarray) -> Tuple[float, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        total = 0.0
        grad = np.zeros_like(theta)
        for term in self.terms:
            n, n_pa = term.b_index.shape
            slopes_b = theta[term.b_index]
            alpha = np.exp(theta[term.a_index])
            values = theta[term.mu_index] + np.sum(slopes_b * term.parent_means, axis=1)
            y = np.concatenate([values, np.hstack([slopes_b, alpha[:, None]]).ravel()])
            value, gy = _gaussian_neg_logpdf(y, term.cho)
            total += value - float(np.sum(theta[term.a_index]))

            g_values = gy[:n]
            g_slopes = gy[n:].reshape(n, n_pa + 1)
            np.add.at(grad, term.mu_index, g_values)
            if n_pa:
                np.add.at(
                    grad, term.b_index, g_values[:, None] * term.parent_means + g_slopes[:, :-1]
                )
            np.add.at(grad, term.a_index, g_slopes[:, -1] * alpha - 1.0)
        return total, grad
