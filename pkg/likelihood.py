"""
Multi-condition likelihood of a linearized (possibly cyclic) structural causal model.

For one condition with data X (N x D) and parameters (B, mu, a = log alpha),
the model is X (I - B) = 1 mu^T + E diag(alpha), with i.i.d. standardized
disturbances E ~ p0. The negative log-likelihood is

    -N log|det(I - B)| + sum_{n,i} [ -log p0(E_ni) + a_i ]

and conditions contribute additively. For an acyclic mask det(I - B) = 1 and
the likelihood factorizes over compounds.

Free-parameter vector layout (shared by optimizer, priors and Hessians):
conditions in order; within a condition the masked B entries column by
column (target compound j ascending, parents of j ascending), then mu, then a.
"""

import logging
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Tuple

import numpy as np
from scipy import linalg

import config
from causal_graph import Graph, sorted_parents
from causal_utils import CausalDiscoveryError

logger = logging.getLogger(__name__)

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
LOG_PI = math.log(math.pi)
LOG_2 = math.log(2.0)


class SingularMatrixError(CausalDiscoveryError, ArithmeticError):
    """I - B is singular: the disturbance-to-data map is not invertible."""


class NoiseModel(str, Enum):
    GAUSSIAN = "gaussian"
    SUPER_GAUSSIAN = "supergaussian"


def noise_nll(e, model: NoiseModel):
    """-log p0(e), elementwise."""
    e = np.asarray(e, dtype=float)
    if NoiseModel(model) is NoiseModel.GAUSSIAN:
        return 0.5 * e * e + LOG_SQRT_2PI
    # log cosh(e) without overflow
    return np.logaddexp(e, -e) - LOG_2 + LOG_PI


def noise_nll_deriv(e, model: NoiseModel):
    """d/de of -log p0(e), elementwise."""
    e = np.asarray(e, dtype=float)
    if NoiseModel(model) is NoiseModel.GAUSSIAN:
        return e
    return np.tanh(e)


@dataclass(frozen=True, eq=False)
class ConditionParameters:
    """Linearization (B, mu, a) for one condition; B[i, j] is the effect of x_i on x_j."""

    b: np.ndarray
    mu: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "b", np.array(self.b, dtype=float))
        object.__setattr__(self, "mu", np.array(self.mu, dtype=float))
        object.__setattr__(self, "a", np.array(self.a, dtype=float))
        d = self.mu.shape[0]
        if self.b.shape != (d, d) or self.a.shape != (d,):
            raise ValueError(
                f"inconsistent parameter shapes: b {self.b.shape}, mu {self.mu.shape}, a {self.a.shape}"
            )

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    @property
    def alpha(self) -> np.ndarray:
        return np.exp(self.a)

    def copy(self) -> "ConditionParameters":
        return ConditionParameters(self.b.copy(), self.mu.copy(), self.a.copy())

    def masked_by(self, g: Graph) -> bool:
        """True iff b is zero outside the edges of g."""
        return not np.any(self.b[~g.adjacency()])


@dataclass(frozen=True, eq=False)
class ParameterSet:
    graph: Graph
    per_condition: Tuple[ConditionParameters, ...]

    def __post_init__(self):
        per_condition = tuple(self.per_condition)
        for c, p in enumerate(per_condition):
            if p.d != self.graph.d:
                raise ValueError(f"condition {c + 1} has {p.d} compounds, graph has {self.graph.d}")
        object.__setattr__(self, "per_condition", per_condition)

    @property
    def k(self) -> int:
        return len(self.per_condition)


# ============================================================================
# PARAMETER VECTOR LAYOUT
# ============================================================================


class ParameterLayout:
    """Maps between a ParameterSet and its flat free-parameter vector."""

    def __init__(self, graph: Graph, k: int):
        self.graph = graph
        self.k = k
        d = graph.d
        # (parent, target) in column-major order
        self.edge_order = [(i, j) for j in range(d) for i in sorted_parents(graph, j)]
        self.edge_rows = np.array([i for i, _ in self.edge_order], dtype=int)
        self.edge_cols = np.array([j for _, j in self.edge_order], dtype=int)
        self.n_edges = len(self.edge_order)
        self.block_size = self.n_edges + 2 * d
        self.size = self.block_size * k

    def block(self, c: int) -> slice:
        return slice(c * self.block_size, (c + 1) * self.block_size)

    def b_slice(self, c: int) -> slice:
        start = c * self.block_size
        return slice(start, start + self.n_edges)

    def mu_slice(self, c: int) -> slice:
        start = c * self.block_size + self.n_edges
        return slice(start, start + self.graph.d)

    def a_slice(self, c: int) -> slice:
        start = c * self.block_size + self.n_edges + self.graph.d
        return slice(start, start + self.graph.d)

    def b_index(self, c: int, i: int, j: int) -> int:
        """Vector position of B[i, j] in condition c."""
        return c * self.block_size + self.edge_order.index((i, j))

    def pack_condition(self, b: np.ndarray, mu: np.ndarray, a: np.ndarray) -> np.ndarray:
        return np.concatenate([b[self.edge_rows, self.edge_cols], mu, a])

    def pack(self, params: ParameterSet) -> np.ndarray:
        return np.concatenate(
            [self.pack_condition(p.b, p.mu, p.a) for p in params.per_condition]
        )

    def unpack(self, theta: np.ndarray) -> ParameterSet:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.size,):
            raise ValueError(f"expected a vector of length {self.size}, got shape {theta.shape}")
        d = self.graph.d
        per_condition = []
        for c in range(self.k):
            b = np.zeros((d, d))
            b[self.edge_rows, self.edge_cols] = theta[self.b_slice(c)]
            per_condition.append(
                ConditionParameters(b, theta[self.mu_slice(c)], theta[self.a_slice(c)])
            )
        return ParameterSet(self.graph, tuple(per_condition))


def pack_parameters(params: ParameterSet) -> np.ndarray:
    return ParameterLayout(params.graph, params.k).pack(params)


def unpack_parameters(theta: np.ndarray, graph: Graph, k: int) -> ParameterSet:
    return ParameterLayout(graph, k).unpack(theta)


# ============================================================================
# LIKELIHOOD TERMS
# ============================================================================


def log_abs_det_ImB(b: np.ndarray) -> Tuple[float, Tuple[np.ndarray, np.ndarray]]:
    """
    log|det(I - B)| via a pivoted LU factorization.

    Returns the value together with the (lu, piv) factorization so callers
    can solve with I - B without refactorizing.

    Raises:
        SingularMatrixError: if the smallest pivot is negligible relative to the largest
    """
    b = np.asarray(b, dtype=float)
    m = np.eye(b.shape[0]) - b
    if not np.all(np.isfinite(m)):
        raise SingularMatrixError("I - B has non-finite entries")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        lu, piv = linalg.lu_factor(m, check_finite=False)
    pivots = np.abs(np.diag(lu))
    scale = max(1.0, float(pivots.max()))
    if pivots.min() <= config.SINGULAR_TOLERANCE * scale:
        raise SingularMatrixError(
            f"I - B is singular (smallest pivot {pivots.min():.3e}, largest {pivots.max():.3e})"
        )
    return float(np.sum(np.log(pivots))), (lu, piv)


def residuals(x: np.ndarray, p: ConditionParameters) -> np.ndarray:
    """Standardized disturbances E = (X (I - B) - mu) / alpha."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != p.d:
        raise ValueError(f"data must have {p.d} columns, got shape {x.shape}")
    return (x - x @ p.b - p.mu) / p.alpha


def _condition_terms(
    x: np.ndarray, p: ConditionParameters, model: NoiseModel, with_gradient: bool
):
    """Value (and gradient arrays dB, dmu, da) of one condition's negative log-likelihood."""
    n = x.shape[0]
    log_det, (lu, piv) = log_abs_det_ImB(p.b)
    e = residuals(x, p)
    value = -n * log_det + float(np.sum(noise_nll(e, model))) + n * float(np.sum(p.a))
    if not with_gradient:
        return value, None

    alpha = p.alpha
    psi = noise_nll_deriv(e, model)
    scaled = psi / alpha
    # residual term: dE_ni / dB_ki = -X_nk / alpha_i
    d_b = -(x.T @ scaled)
    if n > 0:
        # d(-N log|det(I - B)|)/dB_ki = N [(I - B)^{-1}]_ik
        inv = linalg.lu_solve((lu, piv), np.eye(p.d), check_finite=False)
        d_b += n * inv.T
    d_mu = -scaled.sum(axis=0)
    d_a = -(psi * e).sum(axis=0) + n
    return value, (d_b, d_mu, d_a)


def nll_and_gradient(
    x_all: Sequence[np.ndarray], params: ParameterSet, model: NoiseModel, with_gradient: bool = True
) -> Tuple[float, np.ndarray]:
    """Negative log-likelihood and its gradient in the ParameterLayout order."""
    if len(x_all) != params.k:
        raise ValueError(f"{len(x_all)} data matrices for {params.k} conditions")
    layout = ParameterLayout(params.graph, params.k)
    total = 0.0
    grad = np.zeros(layout.size) if with_gradient else None
    for c, (x, p) in enumerate(zip(x_all, params.per_condition)):
        x = np.asarray(x, dtype=float)
        if x.shape[0] == 0:
            continue
        value, parts = _condition_terms(x, p, model, with_gradient)
        total += value
        if with_gradient:
            d_b, d_mu, d_a = parts
            grad[layout.block(c)] = layout.pack_condition(d_b, d_mu, d_a)
    return total, grad


def neg_log_likelihood(
    x_all: Sequence[np.ndarray], params: ParameterSet, model: NoiseModel
) -> float:
    value, _ = nll_and_gradient(x_all, params, model, with_gradient=False)
    return value


def nll_gradient(
    x_all: Sequence[np.ndarray], params: ParameterSet, model: NoiseModel
) -> np.ndarray:
    _, grad = nll_and_gradient(x_all, params, model)
    return grad
