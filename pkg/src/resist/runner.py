"""Round-by-round simulation of RESIST and the multi-step-consensus DGD baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np

from . import kernels
from .attack import AttackPlan, AttackStrategy, CompromisedLinkSet, corrupt, corrupt_link, select_links
from .graph import DirectedGraph, require_degree
from .objectives import LocalObjective
from .rng import substream
from .screening import RULES, aggregate


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StepSchedule:
    kind: Literal["constant", "diminishing", "fixed-horizon"] = "constant"
    h: float = 0.1
    p: float = 0.05
    omega: float = 0.6
    S: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "diminishing", "fixed-horizon"):
            raise ConfigError(f"unknown step schedule {self.kind!r}")
        if self.kind == "constant" and not self.h > 0:
            raise ConfigError("h must be positive")
        if self.kind == "diminishing" and not self.p > 0:
            raise ConfigError("p must be positive")
        if self.kind == "fixed-horizon" and not self.S >= 1:
            raise ConfigError("S must be at least 1")


def stepsize(schedule: StepSchedule, s: int) -> float:
    if s < 0:
        raise ConfigError("s must be non-negative")
    if schedule.kind == "constant":
        return schedule.h
    if schedule.kind == "diminishing":
        return schedule.p / (s + 1) ** schedule.omega
    return 1.0 / math.sqrt(schedule.S)


Record = Literal["none", "blocks", "rounds"]


@dataclass(frozen=True)
class RunConfig:
    graph: DirectedGraph
    b: int = 1
    attack: AttackPlan = field(default_factory=AttackPlan)
    rule: str = "cwtm"
    J: int = 2
    schedule: StepSchedule = field(default_factory=StepSchedule)
    T_max: int = 100
    init_radius: float = 1.0
    seed: int = 0
    record_mixing: Record = "none"
    t_stride: int = 0
    byzantine: frozenset[int] = frozenset()
    w0: np.ndarray | None = field(default=None, compare=False)

    def validate(self) -> None:
        if self.J <= 1:
            raise ConfigError(f"J must exceed 1, got {self.J}")
        if self.T_max < self.J:
            raise ConfigError(f"T_max={self.T_max} must be at least J={self.J}")
        if self.rule not in RULES:
            raise ConfigError(f"unknown screening rule {self.rule!r}")
        if self.record_mixing not in ("none", "blocks", "rounds"):
            raise ConfigError(f"unknown record mode {self.record_mixing!r}")
        if self.record_mixing != "none" and self.rule != "cwtm":
            raise ConfigError("mixing matrices exist only for the cwtm rule")
        if not self.init_radius >= 0:
            raise ConfigError("init_radius must be non-negative")
        if self.rule != "mean":
            try:
                require_degree(self.graph, self.b)
            except ValueError as e:
                raise ConfigError(str(e)) from e
            if not self.b < (min(self.graph.in_degrees()) + 1) / 2:
                raise ConfigError("b must satisfy b < (min in-degree + 1)/2")
        if any(not 0 <= u < self.graph.node_count for u in self.byzantine):
            raise ConfigError("byzantine node out of range")


@dataclass
class Trajectory:
    config: RunConfig
    W_s: np.ndarray
    t_of_s: np.ndarray
    W_t: dict[int, np.ndarray]
    links: list[CompromisedLinkSet]
    blocks: np.ndarray | None = None
    rounds: list[np.ndarray] | None = None
    final_W: np.ndarray | None = None
    final_t: int = 0

    @property
    def s_count(self) -> int:
        return len(self.W_s) - 1


class _Inbox:
    """CSR description of every in-link plus the buffers filled each round."""

    def __init__(self, g: DirectedGraph, d: int):
        M = g.node_count
        self.indptr = np.zeros(M + 1, dtype=np.int64)
        for j in range(M):
            self.indptr[j + 1] = self.indptr[j] + len(g.in_neighbors(j))
        self.indices = np.array([i for j in range(M) for i in g.in_neighbors(j)], dtype=np.int64)
        self.receivers = np.repeat(np.arange(M, dtype=np.int64), np.diff(self.indptr))
        self.pos = {(int(i), int(j)): p for p, (i, j) in enumerate(zip(self.indices, self.receivers))}
        self.received = np.empty((len(self.indices), d))
        self.compromised = np.zeros(len(self.indices), dtype=np.uint8)


def _initial_state(cfg: RunConfig, M: int, d: int) -> np.ndarray:
    if cfg.w0 is not None:
        W = np.array(cfg.w0, dtype=float)
        if W.shape != (M, d):
            raise ConfigError(f"w0 must have shape {(M, d)}")
        return W
    return substream(cfg.seed, "init").uniform(-cfg.init_radius, cfg.init_radius, size=(M, d))


def _fill_inbox(box: _Inbox, W: np.ndarray, cfg: RunConfig, links: CompromisedLinkSet, t: int) -> None:
    np.take(W, box.indices, axis=0, out=box.received)
    box.compromised[:] = 0
    for i, j in links.links:
        p = box.pos[(i, j)]
        box.received[p] = corrupt_link(cfg.attack, t, i, j, W[i])
        box.compromised[p] = 1
    strat = cfg.attack.strategy if cfg.attack.strategy.kind != "none" else AttackStrategy("random-value")
    for u in cfg.byzantine:
        # A Byzantine node ignores the protocol and sends independently drawn values per link.
        for p in np.flatnonzero(box.indices == u):
            j = int(box.receivers[p])
            box.received[p] = corrupt(W[u], strat, substream(cfg.attack.seed, "attack-value", t, u, j))


def _screen_per_node(W, box: _Inbox, rule: str, b: int, order: Sequence[int]) -> np.ndarray:
    out = np.empty_like(W)
    for j in order:
        lo, hi = box.indptr[j], box.indptr[j + 1]
        rec = list(zip(box.indices[lo:hi].tolist(), box.received[lo:hi]))
        out[j] = aggregate(rule, W[j], rec, b)
    return out


def _simulate(cfg: RunConfig, objectives: Sequence[LocalObjective], node_order: Sequence[int] | None = None) -> Trajectory:
    cfg.validate()
    g = cfg.graph
    M = g.node_count
    if len(objectives) != M:
        raise ConfigError(f"need {M} objectives, got {len(objectives)}")
    d = objectives[0].dim
    W = _initial_state(cfg, M, d)
    box = _Inbox(g, d)
    honest = np.array([j not in cfg.byzantine for j in range(M)])
    stride = cfg.t_stride or cfg.J
    per_node = node_order is not None or cfg.rule != "cwtm"
    order = list(node_order) if node_order is not None else list(range(M))

    W_s = [W.copy()]
    t_of_s = [0]
    W_t = {0: W.copy()}
    links_log: list[CompromisedLinkSet] = []
    blocks: list[np.ndarray] = []
    rounds: list[np.ndarray] | None = [] if cfg.record_mixing == "rounds" else None
    block = None
    s = 0
    for t in range(cfg.T_max):
        if (t + 1) % cfg.J != 0:
            links = select_links(cfg.attack, g, cfg.b, t)
            links_log.append(links)
            _fill_inbox(box, W, cfg, links, t)
            if cfg.record_mixing != "none":
                Y, _ = kernels.mixing_round(W, box.indptr, box.indices, box.received, box.compromised, cfg.b)
                new = kernels.cwtm_round(W, box.indptr, box.indices, box.received, cfg.b)
                if rounds is not None:
                    rounds.append(Y)
                block = Y if block is None else np.matmul(Y, block)
            elif per_node:
                new = _screen_per_node(W, box, cfg.rule, cfg.b, order)
            else:
                new = kernels.cwtm_round(W, box.indptr, box.indices, box.received, cfg.b)
            W = np.where(honest[:, None], new, W)
        else:
            h = stepsize(cfg.schedule, s)
            new = W.copy()
            for j in order:
                if honest[j]:
                    new[j] = W[j] - h * objectives[j].grad(W[j])
            W = new
            s += 1
            W_s.append(W.copy())
            t_of_s.append(t + 1)
            if cfg.record_mixing != "none":
                blocks.append(block if block is not None else np.broadcast_to(np.eye(M), (d, M, M)).copy())
                block = None
        if (t + 1) % stride == 0:
            W_t[t + 1] = W.copy()
    return Trajectory(
        config=cfg,
        W_s=np.array(W_s),
        t_of_s=np.array(t_of_s),
        W_t=W_t,
        links=links_log,
        blocks=np.array(blocks) if cfg.record_mixing != "none" else None,
        rounds=rounds,
        final_W=W,
        final_t=cfg.T_max,
    )


def run_resist(cfg: RunConfig, objectives: Sequence[LocalObjective], node_order: Sequence[int] | None = None) -> Trajectory:
    """Alternate J-1 screened consensus rounds with one local gradient step.

    ``node_order`` forces the per-node code path and processes nodes in that
    order; results must not depend on it.
    """
    return _simulate(cfg, objectives, node_order)


def run_dgd_multistep(cfg: RunConfig, objectives: Sequence[LocalObjective]) -> Trajectory:
    """Same schedule as RESIST with plain averaging over the node and its in-neighbors."""
    return _simulate(replace(cfg, rule="mean", record_mixing="none"), objectives)


def run_consensus(cfg: RunConfig, W0: np.ndarray, rounds: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Screened consensus only, returning the final state and every round's mixing matrices."""
    g = cfg.graph
    require_degree(g, cfg.b)
    W = np.array(W0, dtype=float)
    box = _Inbox(g, W.shape[1])
    Ys = []
    for t in range(rounds):
        links = select_links(cfg.attack, g, cfg.b, t)
        _fill_inbox(box, W, cfg, links, t)
        Y, _ = kernels.mixing_round(W, box.indptr, box.indices, box.received, box.compromised, cfg.b)
        W = kernels.cwtm_round(W, box.indptr, box.indices, box.received, cfg.b)
        Ys.append(Y)
    return W, Ys
