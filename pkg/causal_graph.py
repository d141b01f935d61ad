"""
Graph, intervention and mechanism-label data model.

A `Graph` on D compounds is a set of directed edges (i, j) meaning x_i -> x_j,
cycles allowed, self-loops forbidden. An `ExperimentDesign` lists the K
experimental conditions; `derive_mechanism_labels` tells, for a given graph,
which version of each compound's causal mechanism is active in which
condition:

    - an abundance intervention on i changes the mechanism of i itself,
    - an activity intervention on t changes the mechanisms of the children of t,
    - a mechanism-set intervention changes the mechanisms of all its targets.

Usage:
    from causal_graph import Graph, ExperimentDesign, derive_mechanism_labels
    g = Graph(4, {(0, 1), (0, 2), (1, 3)})
    labeling = derive_mechanism_labels(g, design)
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import FrozenSet, Iterable, Tuple

import networkx as nx
import numpy as np

from causal_utils import DesignError

logger = logging.getLogger(__name__)

Edge = Tuple[int, int]


@dataclass(frozen=True)
class Graph:
    """Directed graph on `d` compounds; edge (i, j) means i is a parent of j."""

    d: int
    edges: FrozenSet[Edge] = field(default_factory=frozenset)

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d <= 0:
            raise ValueError(f"compound count must be a positive integer, got {self.d!r}")
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if not (0 <= i < self.d and 0 <= j < self.d):
                raise IndexError(f"edge ({i}, {j}) out of range for {self.d} compounds")
            if i == j:
                raise ValueError(f"self-loop on compound {i} is not allowed")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_adjacency(cls, adjacency) -> "Graph":
        adjacency = np.asarray(adjacency, dtype=bool)
        if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {adjacency.shape}")
        rows, cols = np.nonzero(adjacency)
        return cls(adjacency.shape[0], frozenset(zip(rows.tolist(), cols.tolist())))

    def adjacency(self) -> np.ndarray:
        """D x D boolean matrix, entry (i, j) true iff i -> j."""
        adj = np.zeros((self.d, self.d), dtype=bool)
        for i, j in self.edges:
            adj[i, j] = True
        return adj

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def key(self) -> Tuple[int, Tuple[Edge, ...]]:
        """Canonical hashable encoding used by score caches."""
        return (self.d, tuple(sorted(self.edges)))

    def with_edge(self, i: int, j: int) -> "Graph":
        return Graph(self.d, self.edges | {(i, j)})

    def without_edge(self, i: int, j: int) -> "Graph":
        return Graph(self.d, self.edges - {(i, j)})

    def reversed_edge(self, i: int, j: int) -> "Graph":
        return Graph(self.d, (self.edges - {(i, j)}) | {(j, i)})

    def permuted(self, perm: Iterable[int]) -> "Graph":
        """Relabel compounds: old compound k becomes new compound perm[k]."""
        perm = list(perm)
        return Graph(self.d, frozenset((perm[i], perm[j]) for i, j in self.edges))

    def named_edges(self, names) -> list[list[str]]:
        """Edges as [source, target] name pairs in canonical order."""
        return [[names[i], names[j]] for i, j in sorted(self.edges)]

    def __str__(self):
        edges = ", ".join(f"{i}->{j}" for i, j in sorted(self.edges))
        return f"Graph(d={self.d}, edges={{{edges}}})"


def _check_index(g: Graph, k: int) -> None:
    if not 0 <= k < g.d:
        raise IndexError(f"compound index {k} out of range for {g.d} compounds")


def parents(g: Graph, j: int) -> FrozenSet[int]:
    """Direct causes of compound j."""
    _check_index(g, j)
    return frozenset(i for i, jj in g.edges if jj == j)


def children(g: Graph, i: int) -> FrozenSet[int]:
    """Compounds directly caused by compound i."""
    _check_index(g, i)
    return frozenset(j for ii, j in g.edges if ii == i)


def sorted_parents(g: Graph, j: int) -> list[int]:
    """Parents of j in increasing index order (the order used by every parameter layout)."""
    return sorted(parents(g, j))


def is_acyclic(g: Graph) -> bool:
    """True iff g has no directed cycle."""
    digraph = nx.DiGraph()
    digraph.add_nodes_from(range(g.d))
    digraph.add_edges_from(g.edges)
    return nx.is_directed_acyclic_graph(digraph)


# ============================================================================
# INTERVENTIONS AND DESIGNS
# ============================================================================


class InterventionKind(str, Enum):
    OBSERVATIONAL = "observational"
    ABUNDANCE = "abundance"
    ACTIVITY = "activity"
    MECHANISM_SET = "mechanism_set"


@dataclass(frozen=True)
class Intervention:
    kind: InterventionKind
    targets: FrozenSet[int] = field(default_factory=frozenset)

    def __post_init__(self):
        kind = InterventionKind(self.kind)
        targets = frozenset(int(t) for t in self.targets)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "targets", targets)

        if kind is InterventionKind.OBSERVATIONAL and targets:
            raise DesignError("an observational condition cannot have targets")
        if kind in (InterventionKind.ABUNDANCE, InterventionKind.ACTIVITY) and len(targets) != 1:
            raise DesignError(
                f"an {kind.value} intervention needs exactly one target, got {sorted(targets)}"
            )
        if kind is InterventionKind.MECHANISM_SET and not targets:
            raise DesignError("a mechanism_set intervention needs at least one target")

    @classmethod
    def observational(cls) -> "Intervention":
        return cls(InterventionKind.OBSERVATIONAL)

    @classmethod
    def abundance(cls, target: int) -> "Intervention":
        return cls(InterventionKind.ABUNDANCE, frozenset({target}))

    @classmethod
    def activity(cls, target: int) -> "Intervention":
        return cls(InterventionKind.ACTIVITY, frozenset({target}))

    @classmethod
    def mechanism_set(cls, targets: Iterable[int]) -> "Intervention":
        return cls(InterventionKind.MECHANISM_SET, frozenset(targets))

    def changes_mechanism(self, g: Graph, i: int) -> bool:
        """Does this intervention change the causal mechanism of compound i under g?"""
        if self.kind is InterventionKind.OBSERVATIONAL:
            return False
        if self.kind in (InterventionKind.ABUNDANCE, InterventionKind.MECHANISM_SET):
            return i in self.targets
        # activity: i is a child of some target
        return any((t, i) in g.edges for t in self.targets)


@dataclass(frozen=True)
class ExperimentDesign:
    conditions: Tuple[Intervention, ...]
    names: Tuple[str, ...]

    def __post_init__(self):
        conditions = tuple(self.conditions)
        names = tuple(str(n) for n in self.names)
        if not conditions:
            raise DesignError("an experiment design needs at least one condition")
        if len(names) != len(conditions):
            raise DesignError(
                f"{len(conditions)} conditions but {len(names)} names"
            )
        object.__setattr__(self, "conditions", conditions)
        object.__setattr__(self, "names", names)
        if conditions[0].kind is not InterventionKind.OBSERVATIONAL:
            logger.warning(
                "First condition '%s' is %s, not observational; "
                "mechanism label 1 will not be the observational baseline",
                names[0], conditions[0].kind.value,
            )

    @property
    def k(self) -> int:
        return len(self.conditions)

    def validate_for(self, d: int) -> None:
        """Raise DesignError if any target is not a valid compound index."""
        for c, iv in enumerate(self.conditions):
            for t in iv.targets:
                if not 0 <= t < d:
                    raise DesignError(
                        f"condition {c + 1} ('{self.names[c]}') targets compound {t}, "
                        f"but there are only {d} compounds"
                    )

    def permuted(self, perm: Iterable[int]) -> "ExperimentDesign":
        perm = list(perm)
        conditions = tuple(
            Intervention(iv.kind, frozenset(perm[t] for t in iv.targets))
            for iv in self.conditions
        )
        return ExperimentDesign(conditions, self.names)


# ============================================================================
# MECHANISM LABELS
# ============================================================================


@dataclass(frozen=True, eq=False)
class MechanismLabeling:
    """labels[i, c] = m_ic(G) (1-based), counts[i] = M_i(G)."""

    labels: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        labels = np.array(self.labels, dtype=int)
        counts = np.array(self.counts, dtype=int)
        labels.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        """Number of distinct mechanisms, sum_i M_i."""
        return int(self.counts.sum())

    def conditions_with_label(self, i: int, m: int) -> list[int]:
        """Condition indices c (0-based) with m_ic = m."""
        return [int(c) for c in np.flatnonzero(self.labels[i] == m)]

    def __eq__(self, other):
        if not isinstance(other, MechanismLabeling):
            return NotImplemented
        return np.array_equal(self.labels, other.labels) and np.array_equal(
            self.counts, other.counts
        )

    __hash__ = None


def derive_mechanism_labels(g: Graph, design: ExperimentDesign) -> MechanismLabeling:
    """
    Assign mechanism labels m_ic(G) for every compound and condition.

    Every condition that changes the mechanism of compound i gets its own
    fresh label (one label per condition even when several routes apply);
    conditions that leave it unchanged share one label. Labels are numbered
    by first use in condition order, so an observational first condition
    always carries label 1.
    """
    design.validate_for(g.d)
    labels = np.zeros((g.d, design.k), dtype=int)
    counts = np.zeros(g.d, dtype=int)

    for i in range(g.d):
        unchanged_label = 0
        next_label = 1
        for c, iv in enumerate(design.conditions):
            if iv.changes_mechanism(g, i):
                labels[i, c] = next_label
                next_label += 1
            else:
                if unchanged_label == 0:
                    unchanged_label = next_label
                    next_label += 1
                labels[i, c] = unchanged_label
        counts[i] = next_label - 1

    return MechanismLabeling(labels, counts)
