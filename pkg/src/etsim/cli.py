"""Command-line front end.

    etsim simulate --mesh 4x4 --algo ear
    etsim sweep --sizes 4x4,6x6,8x8 --format csv
    etsim bound --mesh 4x4
    etsim bound-compare
    etsim controller-sweep --counts 1,2,4,8
    etsim dump-routing --mesh 4x4 --algo ear --out-dir routes/

A JSON config (``--config`` or $ETSIM_CONFIG) sets defaults; flags win.
Exit codes: 0 ok, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .experiments import bound_compare, bound_report, comm_vector, controller_sweep, simulate, sweep_meshes
from .report import emit, render, write_matrix
from .routing import compute_routes

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _csv_list(text: str, cast=str) -> list:
    try:
        return [cast(v.strip()) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad list {text!r}") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config (default: $ETSIM_CONFIG)")
    p.add_argument("--app", help="app preset name or JSON file")
    p.add_argument("--packet-bits", type=int)
    p.add_argument("--battery", choices=["thin-film", "ideal"])
    p.add_argument("--capacity-pj", type=float, help="per-node battery capacity")
    p.add_argument("--levels", type=int, help="battery levels N_B")
    p.add_argument("--link-cm", type=float, help="mesh link length")
    p.add_argument("--Q", type=float, help="EAR penalty exponent")
    p.add_argument("--frame-cycles", type=int, help="fixed control period")
    p.add_argument("--slot-cycles", type=int, help="fixed upload slot (overrides --frame-cycles)")
    p.add_argument("--e-med", type=float, help="shared-medium energy, pJ/bit")
    p.add_argument("--concurrent", type=int, help="jobs in flight")
    p.add_argument("--buffer", type=int, help="packets per node buffer")
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=["json", "csv", "text"])
    p.add_argument("--out", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="etsim", description="Energy-aware routing simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one simulation")
    _common(p)
    p.add_argument("--mesh")
    p.add_argument("--algo", choices=["ear", "sdr"])
    p.add_argument("--controllers", type=int, help="battery-powered controllers (default: one, unlimited)")
    p.add_argument("--per-node", action="store_true", help="include per-node ledgers")

    p = sub.add_parser("sweep", help="EAR vs SDR over mesh sizes")
    _common(p)
    p.add_argument("--sizes", type=_csv_list)

    p = sub.add_parser("bound", help="analytical job bound")
    _common(p)
    p.add_argument("--mesh")
    p.add_argument("--K", type=int, help="node count (default: from --mesh)")
    p.add_argument("--comm", help="zero | min-hop | comma-separated c_i")

    p = sub.add_parser("bound-compare", help="EAR on ideal batteries vs the bound")
    _common(p)
    p.add_argument("--sizes", type=_csv_list)
    p.add_argument("--comm", help="zero | min-hop | comma-separated c_i")

    p = sub.add_parser("controller-sweep", help="lifetime against controller count")
    _common(p)
    p.add_argument("--sizes", type=_csv_list)
    p.add_argument("--counts", type=lambda s: _csv_list(s, int))
    p.add_argument("--controller-capacity-pj", type=float)

    p = sub.add_parser("dump-routing", help="write W, D, S and RT matrices as CSV")
    _common(p)
    p.add_argument("--mesh")
    p.add_argument("--algo", choices=["ear", "sdr"])
    p.add_argument("--node-levels", type=lambda s: _csv_list(s, int),
                   help="comma-separated battery level per node (default: all full)")
    p.add_argument("--out-dir", required=True)
    return parser


def _apply_flags(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    a = vars(args)
    platform, control, sim = dict(cfg.platform), dict(cfg.control), dict(cfg.sim)
    battery = dict(platform.get("battery", {}))
    if a.get("battery"):
        battery["model"] = a["battery"]
    if a.get("capacity_pj") is not None:
        battery["initial_pj"] = a["capacity_pj"]
    if battery:
        platform["battery"] = battery
    if a.get("levels") is not None:
        platform["levels"] = a["levels"]
    if a.get("link_cm") is not None:
        platform["link_length_cm"] = a["link_cm"]
    if a.get("frame_cycles") is not None:
        control["frame_cycles"] = a["frame_cycles"]
    if a.get("slot_cycles") is not None:
        control["slot_cycles"] = a["slot_cycles"]
    if a.get("e_med") is not None:
        control["e_med_pj_per_bit"] = a["e_med"]
    if a.get("controllers") is not None:
        control["controller_count"] = a["controllers"]
    if a.get("controller_capacity_pj") is not None:
        control["controller_battery"] = {**control.get("controller_battery", {}),
                                         "initial_pj": a["controller_capacity_pj"]}
    for flag, key in (("Q", "Q"), ("concurrent", "concurrent_jobs"), ("buffer", "buffer_capacity")):
        if a.get(flag) is not None:
            sim[key] = a[flag]
    changes = {"platform": platform, "control": control, "sim": sim}
    for flag, key in (("app", "app"), ("packet_bits", "packet_bits"), ("mesh", "mesh"),
                      ("algo", "algorithm"), ("sizes", "sizes"), ("counts", "controller_counts"),
                      ("seed", "seed"), ("format", "format"), ("out", "output")):
        if a.get(flag) is not None:
            changes[key] = a[flag]
    if a.get("comm") is not None:
        comm = a["comm"]
        if comm not in ("zero", "min-hop"):
            try:
                comm = [float(v) for v in comm.split(",")]
            except ValueError:
                raise ConfigError(f"comm: expected zero, min-hop or numbers, got {comm!r}") from None
        changes["bound_comm"] = comm
    return replace(cfg, **changes)


def _resolve(args: argparse.Namespace) -> ExperimentConfig:
    cfg = _apply_flags(load_config(args.config), args)
    cfg.resolved()  # surface every config error before any work starts
    return cfg


def cmd_simulate(cfg: ExperimentConfig, args) -> str:
    m = simulate(cfg)
    record = m.to_dict()
    if not args.per_node:
        record.pop("nodes")
    return render(cfg.format, cfg.resolved(), record)


def cmd_sweep(cfg: ExperimentConfig, args) -> str:
    return render(cfg.format, cfg.resolved(), sweep_meshes(cfg))


def cmd_bound(cfg: ExperimentConfig, args) -> str:
    app = cfg.build_app()
    platform = cfg.build_platform(app)
    comm = comm_vector(app, platform, cfg.bound_comm)
    K = args.K if args.K is not None else platform.K
    if K < 1:
        raise ConfigError("K: must be >= 1")
    counts = platform.mapping.counts if K == platform.K else None
    result = bound_report(app, K, platform.battery.initial_pj, comm, counts)
    return render(cfg.format, cfg.resolved(), result)


def cmd_bound_compare(cfg: ExperimentConfig, args) -> str:
    return render(cfg.format, cfg.resolved(), bound_compare(cfg))


def cmd_controller_sweep(cfg: ExperimentConfig, args) -> str:
    return render(cfg.format, cfg.resolved(), controller_sweep(cfg))


def cmd_dump_routing(cfg: ExperimentConfig, args) -> str:
    app = cfg.build_app()
    platform = cfg.build_platform(app)
    K = platform.K
    levels = args.node_levels or [platform.levels - 1] * K
    if len(levels) != K:
        raise ConfigError(f"node-levels: need {K} values, got {len(levels)}")
    if any(not 0 <= v < platform.levels for v in levels):
        raise ConfigError(f"node-levels: values must lie in [0, {platform.levels})")
    sim = cfg.build_sim()
    W, ap, rt = compute_routes(platform.topology, platform.mapping, cfg.algorithm, levels,
                               sim.Q, platform.levels, backend=sim.backend)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, matrix in (("W", W), ("D", ap.D), ("S", ap.S), ("RT", rt.RT)):
        write_matrix(out / f"{name}.csv", np.asarray(matrix))
    (out / "config.json").write_text(json.dumps(cfg.resolved(), indent=2, sort_keys=True) + "\n")
    summary = {"out_dir": str(out), "files": ["W.csv", "D.csv", "S.csv", "RT.csv", "config.json"],
               "K": K, "algorithm": cfg.algorithm}
    return render(cfg.format, cfg.resolved(), summary)


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "bound": cmd_bound,
    "bound-compare": cmd_bound_compare,
    "controller-sweep": cmd_controller_sweep,
    "dump-routing": cmd_dump_routing,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
        text = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"etsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, ValueError, OSError) as exc:
        print(f"etsim: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        emit(text, cfg.output)
    except OSError as exc:
        print(f"etsim: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
