"""Static directed topologies and the filtered-graph connectivity check."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .rng import substream


class GraphError(ValueError):
    pass


class BudgetExceeded(GraphError):
    """Exhaustive verification asked for more filtered graphs than allowed."""


@dataclass(frozen=True)
class DirectedGraph:
    """Directed graph on nodes ``0..M-1``; edge ``(i, j)`` means j receives from i."""

    node_count: int
    edges: frozenset[tuple[int, int]]
    neighborhoods: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.node_count < 2:
            raise GraphError(f"need at least 2 nodes, got {self.node_count}")
        nbrs: list[list[int]] = [[] for _ in range(self.node_count)]
        for i, j in self.edges:
            if i == j:
                raise GraphError(f"self-loop on node {i}")
            if not (0 <= i < self.node_count and 0 <= j < self.node_count):
                raise GraphError(f"edge {(i, j)} out of range")
            nbrs[j].append(i)
        object.__setattr__(self, "neighborhoods", tuple(tuple(sorted(n)) for n in nbrs))

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable[tuple[int, int]]) -> "DirectedGraph":
        return cls(node_count, frozenset((int(i), int(j)) for i, j in edges))

    @property
    def M(self) -> int:
        return self.node_count

    def in_neighbors(self, j: int) -> tuple[int, ...]:
        return self.neighborhoods[j]

    def out_neighbors(self, i: int) -> tuple[int, ...]:
        return tuple(sorted(j for (u, j) in self.edges if u == i))

    def in_degrees(self) -> list[int]:
        return [len(n) for n in self.neighborhoods]

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def relabel(self, perm: Iterable[int]) -> "DirectedGraph":
        """Graph with node ``v`` renamed to ``perm[v]``."""
        p = list(perm)
        return DirectedGraph.from_edges(self.node_count, ((p[i], p[j]) for i, j in self.edges))


@dataclass(frozen=True)
class FilteredGraph:
    base: DirectedGraph
    removed: dict[int, frozenset[int]]

    def kept_edges(self) -> list[tuple[int, int]]:
        return [(i, j) for (i, j) in self.base.sorted_edges() if i not in self.removed.get(j, ())]

    def as_graph(self) -> DirectedGraph:
        return DirectedGraph.from_edges(self.base.node_count, self.kept_edges())


@dataclass
class ConnectivityReport:
    mode: str
    checked_count: int
    all_pass: bool
    tau: int
    counterexample: FilteredGraph | None = None


def complete_graph(M: int) -> DirectedGraph:
    return DirectedGraph.from_edges(M, ((i, j) for i in range(M) for j in range(M) if i != j))


def directed_cycle(M: int) -> DirectedGraph:
    return DirectedGraph.from_edges(M, ((i, (i + 1) % M) for i in range(M)))


def generate_erdos_renyi(M: int, rho: float, seed: int) -> DirectedGraph:
    """Each unordered pair is linked in both directions with probability ``rho``."""
    if M < 2:
        raise GraphError(f"need at least 2 nodes, got {M}")
    if not 0.0 <= rho <= 1.0:
        raise GraphError(f"rho must lie in [0, 1], got {rho}")
    pairs = list(itertools.combinations(range(M), 2))
    draws = substream(seed, "graph").random(len(pairs))
    edges = []
    for (i, j), u in zip(pairs, draws):
        if u < rho:
            edges.append((i, j))
            edges.append((j, i))
    return DirectedGraph.from_edges(M, edges)


def min_in_degree(g: DirectedGraph) -> int:
    return min(g.in_degrees())


def require_degree(g: DirectedGraph, b: int) -> None:
    """Reject graphs where some node has fewer than ``2b + 1`` in-neighbors."""
    if b < 0:
        raise GraphError(f"b must be non-negative, got {b}")
    low = [j for j, n in enumerate(g.in_degrees()) if n < 2 * b + 1]
    if low:
        raise GraphError(f"nodes {low} have in-degree < 2b+1 = {2 * b + 1}")


def _adjacency(M: int, edges: Iterable[tuple[int, int]]) -> csr_matrix:
    e = list(edges)
    if not e:
        return csr_matrix((M, M), dtype=np.int8)
    rows, cols = zip(*e)
    return csr_matrix((np.ones(len(e), dtype=np.int8), (rows, cols)), shape=(M, M))


def _source_nodes(M: int, edges: Iterable[tuple[int, int]]) -> set[int]:
    e = list(edges)
    n_comp, labels = connected_components(_adjacency(M, e), directed=True, connection="strong")
    has_incoming = np.zeros(n_comp, dtype=bool)
    for i, j in e:
        if labels[i] != labels[j]:
            has_incoming[labels[j]] = True
    sources = np.flatnonzero(~has_incoming)
    # A DAG with one source reaches every vertex from it; two sources reach nothing jointly.
    if len(sources) != 1:
        return set()
    return {int(v) for v in np.flatnonzero(labels == sources[0])}


def source_component(g: DirectedGraph) -> set[int]:
    """Nodes having a directed path to every other node (possibly empty)."""
    return _source_nodes(g.node_count, g.edges)


def _check_filterable(g: DirectedGraph, b: int) -> None:
    if b < 0:
        raise GraphError(f"b must be non-negative, got {b}")
    low = [j for j, n in enumerate(g.in_degrees()) if n < 2 * b]
    if low:
        raise GraphError(f"nodes {low} have in-degree < 2b = {2 * b}")


def count_tau(g: DirectedGraph, b: int) -> int:
    """Number of filtered graphs: product over nodes of C(|N_j|, 2b)."""
    _check_filterable(g, b)
    return math.prod(math.comb(n, 2 * b) for n in g.in_degrees())


def enumerate_filtered(g: DirectedGraph, b: int) -> Iterable[FilteredGraph]:
    _check_filterable(g, b)
    choices = [list(itertools.combinations(g.in_neighbors(j), 2 * b)) for j in range(g.node_count)]
    for combo in itertools.product(*choices):
        yield FilteredGraph(g, {j: frozenset(r) for j, r in enumerate(combo)})


def sample_filtered(g: DirectedGraph, b: int, rng: np.random.Generator) -> FilteredGraph:
    removed = {}
    for j in range(g.node_count):
        nbrs = g.in_neighbors(j)
        pick = rng.choice(len(nbrs), size=2 * b, replace=False) if b else []
        removed[j] = frozenset(nbrs[p] for p in pick)
    return FilteredGraph(g, removed)


def _passes(fg: FilteredGraph) -> bool:
    return len(_source_nodes(fg.base.node_count, fg.kept_edges())) > 1


def verify_sufficient_connectivity(
    g: DirectedGraph,
    b: int,
    mode: Literal["exhaustive", "sampled"] | None = None,
    budget: int = 10_000,
    seed: int = 0,
) -> ConnectivityReport:
    """Check that every (or every sampled) filtered graph keeps a source component of size > 1.

    ``mode=None`` picks exhaustive enumeration when tau <= budget, sampling otherwise.
    """
    tau = count_tau(g, b)
    if mode is None:
        mode = "exhaustive" if tau <= budget else "sampled"
    if mode == "exhaustive":
        if tau > budget:
            raise BudgetExceeded(f"budget exceeded: tau={tau} > budget={budget}; use sampled mode")
        graphs: Iterable[FilteredGraph] = enumerate_filtered(g, b)
    elif mode == "sampled":
        rng = substream(seed, "connectivity")
        graphs = (sample_filtered(g, b, rng) for _ in range(budget))
    else:
        raise GraphError(f"unknown mode {mode!r}")
    checked = 0
    for fg in graphs:
        checked += 1
        if not _passes(fg):
            return ConnectivityReport(mode, checked, False, tau, fg)
    return ConnectivityReport(mode, checked, True, tau)


def write_edge_list(g: DirectedGraph, path: str | Path) -> None:
    lines = [str(g.node_count)] + [f"{i} {j}" for i, j in g.sorted_edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path: str | Path) -> DirectedGraph:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 1:
        raise GraphError("edge list must start with the node count on its own line")
    M = int(rows[0][0])
    edges = []
    for r in rows[1:]:
        if len(r) != 2:
            raise GraphError(f"malformed edge line: {' '.join(r)!r}")
        edges.append((int(r[0]), int(r[1])))
    return DirectedGraph.from_edges(M, edges)
