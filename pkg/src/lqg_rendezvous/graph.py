"""Communication topology: adjacency, Laplacian, connectivity, Kronecker products."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigurationError

PRESETS = ("complete", "ring", "path")


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_adjacency(adj: np.ndarray, n: int, where: str) -> None:
    if adj.shape != (n, n):
        raise ConfigurationError(f"{where}: adjacency shape {adj.shape} does not match n={n}")
    if not np.all(np.isfinite(adj)):
        raise ConfigurationError(f"{where}: adjacency has non-finite entries")
    if np.any(np.diag(adj) != 0.0):
        raise ConfigurationError(f"{where}: adjacency diagonal must be zero")
    if np.any(adj < 0.0):
        raise ConfigurationError(f"{where}: adjacency weights must be nonnegative")


@dataclass(frozen=True)
class Topology:
    """Weighted (possibly directed) communication graph over ``n`` robots.

    ``schedule`` maps a step index to the adjacency in force at that step;
    steps without an entry use the base ``adjacency``.
    """

    n: int
    adjacency: np.ndarray
    schedule: Mapping[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if int(self.n) < 1:
            raise ConfigurationError("topology: n must be >= 1")
        adj = _frozen(self.adjacency)
        _check_adjacency(adj, self.n, "topology")
        sched = {}
        for k, a in dict(self.schedule).items():
            a = _frozen(a)
            _check_adjacency(a, self.n, f"topology.schedule[{k}]")
            sched[int(k)] = a
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "schedule", sched)

    @classmethod
    def preset(cls, name: str, n: int) -> "Topology":
        """Unit-weight symmetric graph: ``complete``, ``ring`` or ``path``."""
        adj = np.zeros((n, n))
        if name == "complete":
            adj[:] = 1.0
            np.fill_diagonal(adj, 0.0)
        elif name == "ring":
            for i in range(n):
                j = (i + 1) % n
                if i != j:
                    adj[i, j] = adj[j, i] = 1.0
        elif name == "path":
            for i in range(n - 1):
                adj[i, i + 1] = adj[i + 1, i] = 1.0
        else:
            raise ConfigurationError(f"topology: unknown preset {name!r} (expected one of {PRESETS})")
        return cls(n, adj)

    def adjacency_at(self, k: int) -> np.ndarray:
        return self.schedule.get(int(k), self.adjacency)

    @property
    def is_symmetric(self) -> bool:
        mats = [self.adjacency, *self.schedule.values()]
        return all(np.array_equal(a, a.T) for a in mats)


def laplacian(topology: Topology, k: int = 0) -> np.ndarray:
    """Graph Laplacian at step ``k``: ``l_ii = sum_j a_ij``, ``l_ij = -a_ij``."""
    adj = topology.adjacency_at(k)
    if adj.shape != (topology.n, topology.n):
        raise ConfigurationError(f"topology: adjacency at step {k} has shape {adj.shape}")
    lap = -adj.copy()
    np.fill_diagonal(lap, adj.sum(axis=1))
    return lap


def is_connected(topology: Topology) -> bool:
    """True iff the undirected support of the base adjacency is one component."""
    support = (topology.adjacency != 0) | (topology.adjacency.T != 0)
    seen = {0}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(support[i]):
            if j not in seen:
                seen.add(int(j))
                queue.append(int(j))
    return len(seen) == topology.n


def kronecker(a, b) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("kronecker: operands must be non-empty")
    return np.kron(a, b)
