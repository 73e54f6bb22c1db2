"""Mesh-size sweeps: EAR vs SDR, EAR vs the analytical bound, controller counts."""

from __future__ import annotations

import numpy as np

from .app import AppSpec, normalized_energy
from .bound import bound_for_mapping, upper_bound
from .config import ExperimentConfig
from .platform import Platform, min_hop_packet_energy, parse_mesh
from .sim import SimMetrics, run

# reference figures, printed next to ours for comparison only
REFERENCE_OVERHEAD_PCT = {"4x4": 2.8, "5x5": 3.1, "6x6": 4.1, "7x7": 9.3, "8x8": 11.6}
REFERENCE_BOUND_RATIO = {"4x4": 0.478, "5x5": 0.448, "6x6": 0.449, "7x7": 0.482, "8x8": 0.445}
REFERENCE_GAIN = (5.0, 15.0)


def _size_key(size: str) -> tuple[int, int]:
    w, h = parse_mesh(size)
    return (w * h, w)


def ordered_sizes(sizes) -> list[str]:
    return sorted({str(s).lower() for s in sizes}, key=_size_key)


def comm_vector(app: AppSpec, platform: Platform, choice) -> np.ndarray:
    """Per-operation communication energy c_i used in the bound."""
    if isinstance(choice, str):
        if choice == "zero":
            return np.zeros(app.p)
        if choice == "min-hop":
            c = min_hop_packet_energy(platform.topology, platform.link_model, app.packet_bits)
            return np.full(app.p, c)
        raise ValueError(f"unknown communication choice {choice!r}")
    c = np.asarray(choice, dtype=float)
    if c.shape != (app.p,):
        raise ValueError(f"bound_comm needs {app.p} values")
    return c


def simulate(cfg: ExperimentConfig, size: str | None = None, algorithm: str | None = None,
             control_overrides: dict | None = None) -> SimMetrics:
    app = cfg.build_app()
    platform = cfg.build_platform(app, size)
    control = cfg.build_control(**(control_overrides or {}))
    return run(app, platform, control, cfg.build_sim(algorithm))


def sweep_meshes(cfg: ExperimentConfig) -> list[dict]:
    """EAR and SDR on every size with otherwise identical settings."""
    rows = []
    for size in ordered_sizes(cfg.sizes):
        ear = simulate(cfg, size, "ear")
        sdr = simulate(cfg, size, "sdr")
        rows.append({
            "size": size,
            "K": ear.K,
            "J_EAR": ear.jobs_completed,
            "J_SDR": sdr.jobs_completed,
            "ratio": ear.jobs_completed / sdr.jobs_completed if sdr.jobs_completed else float("inf"),
            "overhead_pct": 100.0 * ear.overhead_fraction,
            "system_overhead_pct": 100.0 * ear.system_overhead_fraction,
            "reference_overhead_pct": REFERENCE_OVERHEAD_PCT.get(size),
            "death_EAR": ear.death_cause,
            "death_SDR": sdr.death_cause,
        })
    return rows


def bound_compare(cfg: ExperimentConfig) -> list[dict]:
    """EAR on ideal batteries against K*B/sum(eps)."""
    ideal = cfg.with_battery("ideal")
    app = ideal.build_app()
    rows = []
    for size in ordered_sizes(cfg.sizes):
        platform = ideal.build_platform(app, size)
        m = run(app, platform, ideal.build_control(), ideal.build_sim("ear"))
        eps = normalized_energy(app, comm_vector(app, platform, cfg.bound_comm))
        B = platform.battery.initial_pj
        j_star = upper_bound(eps, platform.K, B)
        rows.append({
            "size": size,
            "K": platform.K,
            "J_EAR_ideal": m.jobs_completed,
            "J_EAR_fractional": m.jobs_fractional,
            "J_star": j_star,
            "J_star_per_K": j_star / platform.K,
            "J_mapping": bound_for_mapping(platform.mapping.counts, eps, B),
            "ratio": m.jobs_fractional / j_star,
            "reference_ratio": REFERENCE_BOUND_RATIO.get(size),
        })
    return rows


def controller_sweep(cfg: ExperimentConfig) -> list[dict]:
    """System lifetime against the number of battery-powered controllers."""
    rows = []
    for size in ordered_sizes(cfg.sizes):
        for count in sorted(set(cfg.controller_counts)):
            m = simulate(cfg, size, control_overrides={"controller_count": count})
            rows.append({
                "size": size,
                "K": m.K,
                "controllers": count,
                "lifetime_cycles": m.elapsed_cycles,
                "death_cause": m.death_cause,
                "jobs_completed": m.jobs_completed,
            })
    return rows


def bound_report(app: AppSpec, K: int, B: float, comm: np.ndarray,
                 counts: np.ndarray | None = None) -> dict:
    eps = normalized_energy(app, comm)
    out = {
        "K": K,
        "B": B,
        "c": comm.tolist(),
        "eps": eps.tolist(),
        "J_star": upper_bound(eps, K, B),
        "n_star": (K * eps / eps.sum()).tolist(),
    }
    if counts is not None:
        out["mapping_counts"] = [int(v) for v in counts]
        out["J_mapping"] = bound_for_mapping(counts, eps, B)
    return out
