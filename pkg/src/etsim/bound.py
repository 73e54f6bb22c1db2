"""Analytical job-count bounds for a given energy profile and node budget."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .platform import optimal_counts


def _check(eps, K, B) -> np.ndarray:
    e = np.asarray(eps, dtype=float)
    if e.ndim != 1 or e.size == 0 or np.any(e <= 0):
        raise ValueError("normalized energies must be a non-empty positive vector")
    if K < 1:
        raise ValueError("node budget K must be >= 1")
    if not B > 0:
        raise ValueError("battery budget B must be positive")
    return e


def upper_bound(eps: Sequence[float], K: int, B: float) -> float:
    """Best achievable job count over all strategies: K*B / sum(eps)."""
    e = _check(eps, K, B)
    return K * B / math.fsum(e)


def bound_for_mapping(n: Sequence[int], eps: Sequence[float], B: float) -> int:
    """Job ceiling for a fixed duplicate allocation: floor(min_i n_i*B/eps_i)."""
    counts = np.asarray(n, dtype=float)
    e = np.asarray(eps, dtype=float)
    if counts.shape != e.shape:
        raise ValueError("allocation and energy vectors differ in length")
    if np.any(counts <= 0):
        return 0
    return int(math.floor(float(np.min(counts * B / e))))


@dataclass
class TheoremCheck:
    analytic_value: float
    analytic_allocation: np.ndarray
    grid_value: float
    grid_allocation: np.ndarray
    step: float
    balance_spread: float  # max - min of n_i*B/eps_i at the analytic allocation

    @property
    def allocation_error(self) -> float:
        return float(np.max(np.abs(self.grid_allocation - self.analytic_allocation)))

    @property
    def ok(self) -> bool:
        # grid optimum can only undershoot the continuous one
        value_ok = self.grid_value <= self.analytic_value * (1 + 1e-12)
        # snapping n* to the grid moves up to p-1 coordinates by one step each
        p = self.analytic_allocation.size
        slack = max(p - 1, 1) * self.step
        close = self.analytic_value - self.grid_value <= slack * self.analytic_value / float(
            np.min(self.analytic_allocation)
        ) + 1e-9
        return bool(value_ok and close and self.allocation_error <= slack + 1e-9)


def verify_theorem1(eps: Sequence[float], K: int, B: float, step: float = 0.01) -> TheoremCheck:
    """Grid-search max-min allocations on sum(n) = K and compare with the closed form."""
    e = _check(eps, K, B)
    p = e.size
    if p > 4:
        raise ValueError("grid verification supports p <= 4")
    n_star = optimal_counts(e, K)
    j_star = upper_bound(e, K, B)
    ticks = np.round(np.arange(0, K + step / 2, step), 12)

    best_val, best_n = -np.inf, None
    if p == 1:
        best_val, best_n = K * B / e[0], np.array([float(K)])
    elif p == 2:
        last = K - ticks
        vals = np.minimum(ticks * B / e[0], last * B / e[1])
        k = int(np.argmax(vals))
        best_val, best_n = float(vals[k]), np.array([ticks[k], last[k]])
    else:
        # fix n_1 row by row, vectorise the remaining coordinates
        for a in ticks:
            rest = ticks[ticks <= K - a + 1e-12]
            if p == 3:
                n2 = rest
                n3 = K - a - n2
                vals = np.minimum(np.minimum(a * B / e[0], n2 * B / e[1]), n3 * B / e[2])
                k = int(np.argmax(vals))
                if vals[k] > best_val:
                    best_val, best_n = float(vals[k]), np.array([a, n2[k], n3[k]])
            else:
                n2, n3 = np.meshgrid(rest, rest, indexing="ij")
                n4 = K - a - n2 - n3
                vals = np.minimum.reduce([
                    np.full_like(n2, a * B / e[0]), n2 * B / e[1], n3 * B / e[2], n4 * B / e[3]
                ])
                vals[n4 < -1e-12] = -np.inf
                k = np.unravel_index(int(np.argmax(vals)), vals.shape)
                if vals[k] > best_val:
                    best_val, best_n = float(vals[k]), np.array([a, n2[k], n3[k], n4[k]])
    terms = n_star * B / e
    return TheoremCheck(j_star, n_star, best_val, best_n, step, float(terms.max() - terms.min()))
