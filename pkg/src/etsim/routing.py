"""SDR and EAR routing: edge weights, all-pairs paths, routing tables."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .kernels import NONE
from .platform import Mapping, Topology

DEFAULT_Q = 1.0
DEFAULT_LEVELS = 8


@dataclass(frozen=True)
class AllPairsResult:
    D: np.ndarray  # K x K distances
    S: np.ndarray  # K x K successors, -1 where unreachable

    def path(self, i: int, j: int) -> list[int] | None:
        """Walk successors from ``i`` to ``j``; None when unreachable."""
        if not np.isfinite(self.D[i, j]):
            return None
        K = self.D.shape[0]
        path = [i]
        while path[-1] != j:
            nxt = int(self.S[path[-1], j])
            if nxt == NONE or len(path) > K:
                raise RuntimeError(f"broken successor chain {path} -> {j}")
            path.append(nxt)
        return path


@dataclass(frozen=True)
class RoutingTables:
    RT: np.ndarray  # K x p, RT[n, i-1] = next hop of node n toward module i

    @classmethod
    def empty(cls, K: int, p: int) -> "RoutingTables":
        return cls(np.full((K, p), NONE, dtype=np.int64))

    def successor(self, node: int, module_id: int) -> int | None:
        s = int(self.RT[node, module_id - 1])
        return None if s == NONE else s

    def __eq__(self, other) -> bool:
        return isinstance(other, RoutingTables) and np.array_equal(self.RT, other.RT)

    __hash__ = None


def weights_sdr(topology: Topology) -> np.ndarray:
    """Shortest-distance weights: link length on edges, ``inf`` elsewhere."""
    return topology.length_matrix()


def weight_fn(level: int, Q: float = DEFAULT_Q, levels: int = DEFAULT_LEVELS) -> float:
    """Exponential battery penalty ``2 ** (Q * (levels - 1 - level))``."""
    if levels < 2:
        raise ValueError("levels must be >= 2")
    if not 0 <= level < levels:
        raise ValueError(f"battery level {level} outside [0, {levels})")
    if not Q > 0:
        raise ValueError("Q must be positive")
    return float(2.0 ** (Q * (levels - 1 - level)))


def weights_ear(
    topology: Topology,
    levels: Sequence[int],
    Q: float = DEFAULT_Q,
    n_levels: int = DEFAULT_LEVELS,
) -> np.ndarray:
    """Energy-aware weights: each edge scaled by the receiver's battery penalty."""
    lv = np.asarray(levels, dtype=np.int64)
    if lv.shape != (topology.node_count,):
        raise ValueError("need one battery level per node")
    if np.any(lv < 0) or np.any(lv >= n_levels):
        raise ValueError(f"battery levels must lie in [0, {n_levels})")
    if not Q > 0:
        raise ValueError("Q must be positive")
    penalty = np.power(2.0, Q * (n_levels - 1 - lv).astype(np.float64))
    W = topology.length_matrix() * penalty[None, :]
    np.fill_diagonal(W, 0.0)
    return W


def all_pairs(W: np.ndarray, backend: str | None = None) -> AllPairsResult:
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError("weight matrix must be square")
    if np.any(np.diag(W) != 0):
        raise ValueError("weight matrix diagonal must be zero")
    if np.any(W < 0):
        raise ValueError("weights must be non-negative")
    D, S = kernels.floyd_warshall(W, backend)
    return AllPairsResult(D, S)


def module_index(mapping: Mapping) -> tuple[np.ndarray, np.ndarray]:
    """Flattened S_i sets: (members, offsets) in ascending node order."""
    assignment = np.asarray(mapping.assignment, dtype=np.int64)
    order = np.argsort(assignment, kind="stable")
    counts = np.bincount(assignment - 1, minlength=mapping.p)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return order.astype(np.int64), offsets


def build_routing_tables(
    ap: AllPairsResult,
    mapping: Mapping,
    deadlocked: Iterable[int] = (),
    prev: RoutingTables | None = None,
    backend: str | None = None,
) -> RoutingTables:
    """Pick, for every (node, module), the successor toward the nearest duplicate.

    A deadlocked node skips candidates whose first hop equals its current
    table entry; if every candidate is skipped the entry becomes ``None``.
    """
    K = ap.D.shape[0]
    if len(mapping.assignment) != K:
        raise ValueError("mapping size does not match distance matrix")
    members, offsets = module_index(mapping)
    flags = np.zeros(K, dtype=bool)
    for n in deadlocked:
        flags[int(n)] = True
    prev_rt = prev.RT if prev is not None else np.full((K, mapping.p), NONE, dtype=np.int64)
    RT = kernels.routing_kernel(ap.D, ap.S, members, offsets, flags, prev_rt, backend)
    return RoutingTables(RT)


def compute_routes(
    topology: Topology,
    mapping: Mapping,
    algorithm: str,
    levels: Sequence[int] | None = None,
    Q: float = DEFAULT_Q,
    n_levels: int = DEFAULT_LEVELS,
    deadlocked: Iterable[int] = (),
    prev: RoutingTables | None = None,
    backend: str | None = None,
) -> tuple[np.ndarray, AllPairsResult, RoutingTables]:
    """All three phases for ``algorithm`` in {"ear", "sdr"}."""
    algo = algorithm.lower()
    if algo == "sdr":
        W = weights_sdr(topology)
    elif algo == "ear":
        if levels is None:
            levels = [n_levels - 1] * topology.node_count
        W = weights_ear(topology, levels, Q, n_levels)
    else:
        raise ValueError(f"unknown routing algorithm {algorithm!r}")
    ap = all_pairs(W, backend)
    return W, ap, build_routing_tables(ap, mapping, deadlocked, prev, backend)
