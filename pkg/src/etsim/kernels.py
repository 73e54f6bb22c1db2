"""Hot routing kernels: all-pairs shortest paths and routing-table selection.

Each kernel exists twice: a scalar loop compiled with ``numba.njit`` and a
vectorised numpy version. Both produce bit-identical output. The loop
version is used when numba imports and ``ETSIM_DISABLE_NUMBA`` is unset;
``backend=`` overrides the choice per call.
"""

from __future__ import annotations

import os

import numpy as np

NONE = -1  # successor sentinel

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("ETSIM_DISABLE_NUMBA", "").lower() not in (
    "1",
    "true",
    "yes",
)


def _speed_up(func):
    """njit ``func`` when numba is available; otherwise keep the Python loop."""
    if HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    return func


def seed_successors(W: np.ndarray) -> np.ndarray:
    K = W.shape[0]
    S = np.where(np.isfinite(W), np.arange(K)[None, :], NONE).astype(np.int64)
    np.fill_diagonal(S, np.arange(K))
    return S


@_speed_up
def _fw_loops(D, S):
    K = D.shape[0]
    for n in range(K):
        for i in range(K):
            d_in = D[i, n]
            for j in range(K):
                alt = d_in + D[n, j]
                # strict: ties keep the previous successor
                if D[i, j] > alt:
                    D[i, j] = alt
                    S[i, j] = S[i, n]
    return D, S


def _fw_numpy(D, S):
    K = D.shape[0]
    for n in range(K):
        alt = D[:, n, None] + D[None, n, :]
        better = D > alt
        D = np.where(better, alt, D)
        S = np.where(better, S[:, n, None], S)
    return D, S


def floyd_warshall(W: np.ndarray, backend: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Distances and successors for weight matrix ``W`` (``inf`` = no edge)."""
    D = np.array(W, dtype=np.float64, copy=True)
    S = seed_successors(D)
    if _pick(backend) == "numba":
        return _fw_loops(D, S)
    return _fw_numpy(D, S)


@_speed_up
def _rt_loops(D, S, members, offsets, deadlocked, prev):
    K = D.shape[0]
    p = offsets.shape[0] - 1
    RT = np.full((K, p), -1, dtype=np.int64)
    for n in range(K):
        for i in range(p):
            dist = np.inf
            suc = -1
            for idx in range(offsets[i], offsets[i + 1]):
                j = members[idx]
                if (not deadlocked[n]) or S[n, j] != prev[n, i]:
                    if dist > D[n, j]:
                        suc = S[n, j]
                        dist = D[n, j]
            RT[n, i] = suc
    return RT


def _rt_numpy(D, S, members, offsets, deadlocked, prev):
    K = D.shape[0]
    p = offsets.shape[0] - 1
    RT = np.full((K, p), NONE, dtype=np.int64)
    rows = np.arange(K)
    for i in range(p):
        cand = members[offsets[i]:offsets[i + 1]]
        if cand.size == 0:
            continue
        dist = D[:, cand].copy()
        succ = S[:, cand]
        blocked = deadlocked[:, None] & (succ == prev[:, i, None])
        dist[blocked] = np.inf
        k = np.argmin(dist, axis=1)  # first minimum wins
        best = dist[rows, k]
        RT[:, i] = np.where(np.isfinite(best), succ[rows, k], NONE)
    return RT


def routing_kernel(
    D: np.ndarray,
    S: np.ndarray,
    members: np.ndarray,
    offsets: np.ndarray,
    deadlocked: np.ndarray,
    prev: np.ndarray,
    backend: str | None = None,
) -> np.ndarray:
    """Per-node successor toward the nearest duplicate of every module.

    ``members[offsets[i]:offsets[i+1]]`` lists the nodes hosting module
    index ``i`` in ascending order.
    """
    args = (
        np.ascontiguousarray(D, dtype=np.float64),
        np.ascontiguousarray(S, dtype=np.int64),
        np.ascontiguousarray(members, dtype=np.int64),
        np.ascontiguousarray(offsets, dtype=np.int64),
        np.ascontiguousarray(deadlocked, dtype=np.bool_),
        np.ascontiguousarray(prev, dtype=np.int64),
    )
    if _pick(backend) == "numba":
        return _rt_loops(*args)
    return _rt_numpy(*args)


def _pick(backend: str | None) -> str:
    if backend is None:
        return "numba" if USE_NUMBA else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend


def active_backend() -> str:
    return _pick(None)
