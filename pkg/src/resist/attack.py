"""Dynamic man-in-the-middle link attacks and the Byzantine-node mapping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Literal

import numpy as np

from .graph import DirectedGraph
from .rng import substream


class AttackError(ValueError):
    pass


StrategyKind = Literal["random-value", "sign-flip", "constant", "none"]
Policy = Literal["dynamic-random", "static"]


@dataclass(frozen=True)
class AttackStrategy:
    kind: StrategyKind = "none"
    R: float = 100.0
    constant: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("random-value", "sign-flip", "constant", "none"):
            raise AttackError(f"unknown strategy {self.kind!r}")
        if self.kind == "random-value" and not (np.isfinite(self.R) and self.R > 0):
            raise AttackError(f"random-value range must be finite and positive, got {self.R}")
        if self.kind == "constant":
            if self.constant is None:
                raise AttackError("constant strategy needs a constant vector")
            if not np.all(np.isfinite(self.constant)):
                raise AttackError("constant vector must be finite")


@dataclass(frozen=True)
class CompromisedLinkSet:
    t: int
    links: frozenset[tuple[int, int]]

    def incoming(self, j: int) -> set[int]:
        """Sources whose link into ``j`` is compromised this round."""
        return {i for (i, k) in self.links if k == j}

    def incoming_counts(self, M: int) -> list[int]:
        counts = [0] * M
        for _, j in self.links:
            counts[j] += 1
        return counts

    def sources(self) -> set[int]:
        return {i for i, _ in self.links}


@dataclass(frozen=True)
class AttackPlan:
    policy: Policy = "dynamic-random"
    strategy: AttackStrategy = field(default_factory=AttackStrategy)
    B_actual: int = 0
    seed: int = 0
    static_links: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self) -> None:
        if self.policy not in ("dynamic-random", "static"):
            raise AttackError(f"unknown selection policy {self.policy!r}")
        if self.B_actual < 0:
            raise AttackError("B_actual must be non-negative")


def _check_cap(links: Iterable[tuple[int, int]], g: DirectedGraph, b: int) -> None:
    counts = [0] * g.node_count
    for i, j in links:
        if (i, j) not in g.edges:
            raise AttackError(f"link {(i, j)} is not an edge of the graph")
        counts[j] += 1
    over = [j for j, c in enumerate(counts) if c > b]
    if over:
        raise AttackError(f"nodes {over} would receive more than b={b} compromised links")


def static_plan(
    links: Iterable[tuple[int, int]],
    g: DirectedGraph,
    b: int,
    strategy: AttackStrategy,
    seed: int = 0,
) -> AttackPlan:
    fixed = frozenset((int(i), int(j)) for i, j in links)
    _check_cap(fixed, g, b)
    return AttackPlan("static", strategy, len(fixed), seed, fixed)


def select_links(plan: AttackPlan, g: DirectedGraph, b: int, t: int) -> CompromisedLinkSet:
    """Links under attack at round ``t``.

    The dynamic policy shuffles the edge list with the ``(seed, t)`` substream and
    accepts edges in order, rejecting any that would push a receiver past ``b``.
    """
    if b < 0:
        raise AttackError("b must be non-negative")
    if plan.policy == "static":
        _check_cap(plan.static_links, g, b)
        return CompromisedLinkSet(t, plan.static_links)
    if plan.B_actual == 0:
        return CompromisedLinkSet(t, frozenset())
    edges = g.sorted_edges()
    order = substream(plan.seed, "attack-select", t).permutation(len(edges))
    counts = [0] * g.node_count
    chosen = []
    for e in order:
        i, j = edges[e]
        if counts[j] < b:
            counts[j] += 1
            chosen.append((i, j))
            if len(chosen) == plan.B_actual:
                return CompromisedLinkSet(t, frozenset(chosen))
    raise AttackError(
        f"cannot place {plan.B_actual} compromised links with at most b={b} per receiver"
    )


def corrupt(message: np.ndarray, strategy: AttackStrategy, rng: np.random.Generator | None = None) -> np.ndarray:
    msg = np.asarray(message, dtype=float)
    if strategy.kind == "none":
        out = msg.copy()
    elif strategy.kind == "sign-flip":
        out = -msg
    elif strategy.kind == "constant":
        c = np.asarray(strategy.constant, dtype=float)
        out = np.broadcast_to(c, msg.shape).copy()
    else:
        if rng is None:
            raise AttackError("random-value corruption needs a generator")
        out = rng.uniform(-strategy.R, strategy.R, size=msg.shape)
    if not np.all(np.isfinite(out)):
        raise AttackError("corruption produced a non-finite value")
    return out


def corrupt_link(plan: AttackPlan, t: int, i: int, j: int, message: np.ndarray) -> np.ndarray:
    """Corrupt the message on link ``(i, j)`` at round ``t`` using its keyed substream."""
    return corrupt(message, plan.strategy, substream(plan.seed, "attack-value", t, i, j))


def map_byzantine(
    byz_nodes: Iterable[int],
    g: DirectedGraph,
    b: int | None = None,
    strategy: AttackStrategy | None = None,
    seed: int = 0,
) -> AttackPlan:
    """Static plan attacking every outgoing edge of the Byzantine nodes."""
    byz = sorted(set(int(u) for u in byz_nodes))
    if b is None:
        b = len(byz)
    if byz and not b < (min(g.in_degrees()) + 1) / 2:
        raise AttackError(f"b={b} violates b < (min in-degree + 1)/2")
    links = [(u, j) for u in byz for j in g.out_neighbors(u)]
    return static_plan(links, g, b, strategy or AttackStrategy("random-value"), seed)
