"""
Sensor graph and Metropolis-Hastings average consensus.

Consensus runs in synchronous rounds over a fixed topology: every node
reads the round-``l`` values of its neighbors and all nodes write their
round-``l+1`` values together, which is a single matrix product with the
doubly stochastic weight matrix. Payloads are flat real vectors of equal
length; row ``i`` of the value array belongs to node ``i``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from gmfusion.errors import ContractError

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 10000
# A round changes a value of magnitude m by a few ulps even at its fixed point,
# so the stopping threshold never drops below this many ulps of the payload scale.
ROUNDOFF_ULPS = 16


@dataclass(frozen=True)
class SensorGraph:
    node_count: int
    edges: frozenset

    def __post_init__(self):
        if self.node_count < 1:
            raise ContractError(f"graph needs at least one node, got {self.node_count}")
        norm = set()
        for edge in self.edges:
            i, j = (int(v) for v in edge)
            if i == j:
                raise ContractError(f"self-loop on node {i}; self membership is implicit")
            for v in (i, j):
                if not 0 <= v < self.node_count:
                    raise ContractError(f"edge ({i}, {j}) references node outside [0, {self.node_count})")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable) -> "SensorGraph":
        return cls(node_count, frozenset(tuple(e) for e in edges))

    @classmethod
    def chain(cls, n: int) -> "SensorGraph":
        return cls.from_edges(n, [(i, i + 1) for i in range(n - 1)])

    @classmethod
    def complete(cls, n: int) -> "SensorGraph":
        return cls.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def _check(self, i: int) -> None:
        if not 0 <= i < self.node_count:
            raise ContractError(f"node index {i} outside [0, {self.node_count})")

    def neighbors(self, i: int) -> set[int]:
        """Closed neighborhood: ``{i}`` plus every node sharing an edge with ``i``."""
        self._check(i)
        out = {i}
        for a, b in self.edges:
            if a == i:
                out.add(b)
            elif b == i:
                out.add(a)
        return out

    def components(self) -> list[set[int]]:
        adj = {i: set() for i in range(self.node_count)}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        seen: set[int] = set()
        comps = []
        for start in range(self.node_count):
            if start in seen:
                continue
            comp = {start}
            queue = deque([start])
            while queue:
                for nb in adj[queue.popleft()]:
                    if nb not in comp:
                        comp.add(nb)
                        queue.append(nb)
            seen |= comp
            comps.append(comp)
        return comps

    def is_connected(self) -> bool:
        return len(self.components()) == 1


def neighbors(g: SensorGraph, i: int) -> set[int]:
    return g.neighbors(i)


def mhmc_weights(g: SensorGraph) -> np.ndarray:
    """Metropolis-Hastings weights: ``1/max(|N_i|, |N_j|)`` on edges, remainder on the diagonal."""
    card = np.array([len(g.neighbors(i)) for i in range(g.node_count)], dtype=float)
    gamma = np.zeros((g.node_count, g.node_count))
    for i, j in g.edges:
        w = 1.0 / max(card[i], card[j])
        gamma[i, j] = w
        gamma[j, i] = w
    np.fill_diagonal(gamma, 1.0 - gamma.sum(axis=1))
    return gamma


def consensus_round(values, gamma) -> np.ndarray:
    """One synchronous round: ``v_i <- sum_j gamma_ij v_j``."""
    values = np.asarray(values, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if values.ndim != 2:
        raise ContractError(f"values must be (nodes, payload_length), got shape {values.shape}")
    if gamma.shape != (values.shape[0], values.shape[0]):
        raise ContractError(f"weight matrix {gamma.shape} does not match {values.shape[0]} nodes")
    return gamma @ values


@dataclass(frozen=True, eq=False)
class ConsensusResult:
    values: np.ndarray
    iterations: int
    converged: bool
    final_change: float


def run_consensus(
    g: SensorGraph,
    init,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> ConsensusResult:
    """Iterate consensus rounds until no node's payload moves by ``tol`` or more (infinity norm).

    A 1-D ``init`` is treated as one scalar per node. Non-convergence is
    reported through ``converged=False``, never raised.
    """
    if not tol > 0.0:
        raise ContractError(f"tol must be positive, got {tol!r}")
    if max_iters < 1:
        raise ContractError(f"max_iters must be >= 1, got {max_iters}")
    values = np.asarray(init, dtype=float)
    scalar = values.ndim == 1
    if scalar:
        values = values[:, None]
    if values.shape[0] != g.node_count:
        raise ContractError(f"{values.shape[0]} payloads for {g.node_count} nodes")
    gamma = mhmc_weights(g)
    eps = np.finfo(float).eps
    change = np.inf
    converged = False
    it = 0
    while it < max_iters:
        nxt = consensus_round(values, gamma)
        it += 1
        change = float(np.max(np.abs(nxt - values))) if nxt.size else 0.0
        values = nxt
        scale = float(np.max(np.abs(values))) if values.size else 0.0
        if change < max(tol, ROUNDOFF_ULPS * eps * scale):
            converged = True
            break
    if scalar:
        values = values[:, 0]
    return ConsensusResult(values, it, converged, change)
