"""Exit criteria for the simulator, each printed as one PASS/FAIL line."""

import json
import math
import os
import subprocess
import sys
import time
from functools import lru_cache

import numpy as np
import pytest

import oracles
from etsim.app import aes_preset, normalized_energy
from etsim.bound import upper_bound, verify_theorem1
from etsim.config import ExperimentConfig
from etsim.experiments import (
    REFERENCE_GAIN,
    REFERENCE_OVERHEAD_PCT,
    bound_compare,
    comm_vector,
    controller_sweep,
    simulate,
    sweep_meshes,
)
from etsim.platform import build_platform, mesh, parity_map
from etsim.routing import all_pairs, compute_routes

pytestmark = pytest.mark.acceptance

SIZES = ["4x4", "5x5", "6x6", "7x7", "8x8"]
TABLE2_J_STAR = {16: 131.42, 25: 205.25, 36: 295.70, 49: 402.48, 64: 525.69}
CONTROLLER_COUNTS = [1, 2, 3, 4, 6, 8, 10, 12, 16]


@lru_cache(maxsize=None)
def default_sweep():
    start = time.perf_counter()
    rows = sweep_meshes(ExperimentConfig(sizes=SIZES))
    return rows, time.perf_counter() - start


@lru_cache(maxsize=None)
def ideal_compare():
    return bound_compare(ExperimentConfig(sizes=SIZES))


@lru_cache(maxsize=None)
def all_runs():
    """Both algorithms on both battery models for every mesh."""
    runs = {}
    for model in ("thin-film", "ideal"):
        cfg = ExperimentConfig().with_battery(model)
        for size in SIZES:
            for algo in ("ear", "sdr"):
                runs[(model, size, algo)] = simulate(cfg, size, algo)
    return runs


@lru_cache(maxsize=None)
def controller_rows(capacity_pj):
    control = {} if capacity_pj is None else {"controller_battery": {"initial_pj": capacity_pj}}
    cfg = ExperimentConfig(sizes=SIZES, controller_counts=CONTROLLER_COUNTS, control=control)
    return controller_sweep(cfg)


# 1 ------------------------------------------------------------------------

def test_c01_closed_form_bound(record):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(2000):
        p = int(rng.integers(1, 8))
        eps = rng.uniform(1.0, 5000.0, p)
        K = int(rng.integers(1, 257))
        B = float(rng.uniform(1.0, 1e6))
        ref = K * B / math.fsum(eps)
        worst = max(worst, abs(upper_bound(eps, K, B) - ref) / ref)
    checks = []
    for _ in range(12):
        p = int(rng.integers(1, 4))
        eps = rng.uniform(10.0, 2000.0, p)
        K = int(rng.integers(p, 17))
        checks.append(verify_theorem1(eps, K, 60000.0, step=0.01))
    # independent loop oracle on a coarse grid
    oracle_ok = all(
        oracles.grid_max_min(e, 6, 1000.0, 0.05) <= upper_bound(e, 6, 1000.0) * (1 + 1e-12)
        and verify_theorem1(e, 6, 1000.0, 0.05).grid_value
        == pytest.approx(oracles.grid_max_min(e, 6, 1000.0, 0.05), rel=1e-9)
        for e in (rng.uniform(10.0, 500.0, 3) for _ in range(5))
    )
    balanced = all(c.balance_spread <= 1e-9 * c.analytic_value for c in checks)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and all(c.ok for c in checks) and oracle_ok and balanced and elapsed < 10
    record(1, ok, f"max rel err {worst:.1e}, {len(checks)} grid checks at step 0.01, "
                  f"max alloc err {max(c.allocation_error for c in checks):.4f}, {elapsed:.1f}s")
    assert ok


# 2 ------------------------------------------------------------------------

def test_c02_bound_linear_in_K(record):
    app = aes_preset()
    eps = normalized_energy(app, comm_vector(app, build_platform(app, 4, 4), "min-hop"))
    per_k = [upper_bound(eps, K, 60000.0) / K for K in TABLE2_J_STAR]
    spread = (max(per_k) - min(per_k)) / min(per_k)
    errors = {K: abs(upper_bound([7304.7], K, 60000.0) - ref) / ref for K, ref in TABLE2_J_STAR.items()}
    ok = spread <= 1e-9 and max(errors.values()) <= 1e-3
    record(2, ok, f"J*/K spread {spread:.1e}; calibrated J* errors "
                  + ", ".join(f"K={K}: {100 * e:.3f}%" for K, e in errors.items()))
    assert ok


# 3 ------------------------------------------------------------------------

def _random_graph(rng, K):
    W = np.full((K, K), math.inf)
    np.fill_diagonal(W, 0.0)
    density = rng.uniform(0.1, 0.9)
    for i in range(K):
        for j in range(K):
            if i != j and rng.random() < density:
                # integers and powers of two keep every path sum exact
                W[i, j] = float(rng.choice([rng.integers(1, 21), 2.0 ** rng.integers(-1, 8)]))
    return W


def test_c03_shortest_paths_match_enumeration(record):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    mismatches = walks = disconnected = 0
    graphs = 1200
    for _ in range(graphs):
        W = _random_graph(rng, int(rng.integers(1, 8)))
        ap = all_pairs(W)
        ref = oracles.simple_path_distances(W)
        if not np.array_equal(ap.D, ref):
            mismatches += 1
            continue
        K = len(W)
        for i in range(K):
            for j in range(K):
                if math.isinf(ap.D[i, j]):
                    disconnected += 1
                    continue
                walks += 1
                if oracles.walk_cost(W, ap.S, i, j)[0] != ap.D[i, j]:
                    mismatches += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 30
    record(3, ok, f"{graphs} graphs, {walks} successor walks, {disconnected} inf pairs, "
                  f"{mismatches} mismatches, {elapsed:.1f}s")
    assert ok


# 4 ------------------------------------------------------------------------

def test_c04_ear_equals_sdr_at_full_charge(record):
    app = aes_preset()
    differing = []
    for w in range(2, 9):
        topo = mesh(w, w)
        mapping = parity_map(topo, app)
        full = [7] * topo.node_count
        We, ape, rte = compute_routes(topo, mapping, "ear", full)
        Ws, aps, rts = compute_routes(topo, mapping, "sdr", full)
        same = (np.array_equal(We, Ws) and np.array_equal(ape.D, aps.D)
                and np.array_equal(ape.S, aps.S) and np.array_equal(rte.RT, rts.RT))
        if not same:
            differing.append(f"{w}x{w}")
    ok = not differing
    record(4, ok, "W, D, S, RT identical on 2x2..8x8" if ok else f"differ on {differing}")
    assert ok


# 5 ------------------------------------------------------------------------

def test_c05_simulation_below_bound(record):
    app = aes_preset()
    violations, worst = [], 0.0
    for (model, size, algo), m in all_runs().items():
        platform = build_platform(app, *map(int, size.split("x")))
        eps = normalized_energy(app, comm_vector(app, platform, "min-hop"))
        j_star = upper_bound(eps, platform.K, platform.battery.initial_pj)
        worst = max(worst, m.jobs_fractional / j_star)
        if m.jobs_fractional > j_star:
            violations.append((model, size, algo))
    ok = not violations
    record(5, ok, f"{len(all_runs())} configurations, max J/J* {worst:.3f}, {len(violations)} violations")
    assert ok


# 6 ------------------------------------------------------------------------

def test_c06_energy_closure(record):
    worst, budget = 0.0, 0
    for (model, size, algo), m in all_runs().items():
        budget += m.budget_violations
        if model != "ideal":
            continue
        total = m.computation_pj + m.communication_pj + m.overhead_pj + m.residual_pj
        worst = max(worst, abs(total - m.initial_pj) / m.initial_pj)
    ok = worst <= 1e-9 and budget == 0
    record(6, ok, f"max closure error {worst:.1e}, {budget} budget violations")
    assert ok


# 7 ------------------------------------------------------------------------

def test_c07_ear_beats_sdr(record):
    rows, elapsed = default_sweep()
    ratios = {r["size"]: r["ratio"] for r in rows}
    ok = all(v >= 2.0 for v in ratios.values()) and elapsed < 60
    lo, hi = REFERENCE_GAIN
    record(7, ok, ", ".join(f"{s}: {r['J_EAR']}/{r['J_SDR']} = {r['ratio']:.2f}x" for s, r in
                            ((r["size"], r) for r in rows))
              + f" (reference {lo:g}-{hi:g}x), sweep {elapsed:.1f}s")
    assert ok


# 8 ------------------------------------------------------------------------

def test_c08_bound_ratio_band(record):
    rows = ideal_compare()
    ok = all(0.30 <= r["ratio"] <= 0.65 for r in rows)
    record(8, ok, ", ".join(f"{r['size']}: {r['ratio']:.3f} (ref {r['reference_ratio']})" for r in rows))
    assert ok


# 9 ------------------------------------------------------------------------

def test_c09_control_overhead(record):
    rows, _ = default_sweep()
    pct = [r["overhead_pct"] for r in rows]
    monotone = all(b >= a for a, b in zip(pct, pct[1:]))
    ok = max(pct) < 15.0 and monotone
    record(9, ok, ", ".join(f"{r['size']}: {r['overhead_pct']:.2f}% (ref {REFERENCE_OVERHEAD_PCT[r['size']]}%)"
                            for r in rows))
    assert ok


# 10 -----------------------------------------------------------------------

def test_c10_deadlock_liveness(record):
    details, ok = [], True
    for model in ("thin-film", "ideal"):
        cfg = ExperimentConfig(sim={"concurrent_jobs": 4, "buffer_capacity": 1}).with_battery(model)
        for algo in ("ear", "sdr"):
            m = simulate(cfg, "4x4", algo)
            ended = m.death_cause != "running"
            ok &= ended and m.deadlock_violations == 0 and m.budget_violations == 0
            details.append(f"{algo}/{model}: {m.jobs_completed} done, {m.deadlock_flags} flags, "
                           f"{m.deadlock_violations} violations")
    record(10, ok, "; ".join(details))
    assert ok


# 11 -----------------------------------------------------------------------

def _sweep_shape(rows):
    by_size, problems, tails = {}, [], {}
    for r in rows:
        by_size.setdefault(r["size"], []).append(r["lifetime_cycles"])
    for size, life in by_size.items():
        if any(b < a for a, b in zip(life, life[1:])):
            problems.append(f"{size} decreasing")
        if life[-1] != life[-2]:
            problems.append(f"{size} not saturated")
        tails[size] = life[-1]
    sizes = list(tails)
    if any(tails[b] >= tails[a] for a, b in zip(sizes, sizes[1:])):
        problems.append("tails not decreasing")
    return problems, tails


def test_c11_controller_sweep(record):
    # default controller battery, and one ten times larger so the rise is visible
    details, ok = [], True
    for capacity in (None, 600000.0):
        problems, tails = _sweep_shape(controller_rows(capacity))
        ok &= not problems
        label = "default" if capacity is None else f"{capacity:g} pJ"
        details.append(f"[{label}] tails " + ", ".join(f"{s}: {v}" for s, v in tails.items())
                       + (f" problems: {problems}" if problems else ""))
    record(11, ok, "; ".join(details))
    assert ok


# 12 -----------------------------------------------------------------------

METRIC_COMMANDS = {
    "sweep.csv": ["sweep", "--format", "csv"],
    "bound_compare.csv": ["bound-compare", "--format", "csv"],
    "controllers.csv": ["controller-sweep", "--format", "csv"],
    "controllers_10x.csv": ["controller-sweep", "--format", "csv", "--controller-capacity-pj", "600000"],
    "bound.json": ["bound"],
    "deadlock.json": ["simulate", "--concurrent", "4", "--buffer", "1"],
}


def _write_metrics(out_dir):
    # relative --out names, since the output path is part of the recorded config
    out_dir.mkdir()
    env = {k: v for k, v in os.environ.items() if k != "ETSIM_CONFIG"}
    for name, args in METRIC_COMMANDS.items():
        subprocess.run([sys.executable, "-m", "etsim.cli", *args, "--out", name],
                       check=True, env=env, cwd=out_dir)


def test_c12_determinism(record, tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    _write_metrics(first)
    _write_metrics(second)
    same = [n for n in METRIC_COMMANDS if (first / n).read_bytes() == (second / n).read_bytes()]
    # the in-process results must agree with the CLI files too
    rows, _ = default_sweep()
    cli_ratio = [line.split(",")[4] for line in (first / "sweep.csv").read_text().splitlines()[2:]]
    agree = cli_ratio == [repr(r["ratio"]) for r in rows]
    ok = len(same) == len(METRIC_COMMANDS) and agree
    record(12, ok, f"{len(same)}/{len(METRIC_COMMANDS)} metric files byte-identical across two runs")
    assert ok
