"""Centralised TDMA control: status upload, route recomputation, download.

Every frame has one upload slot per node (node-id order) followed by a
download phase on a narrow shared medium. The active controller reruns the
routing phases only when the reported status vector changed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .platform import BatterySpec, BatteryState, Mapping, Topology, battery_level
from .routing import AllPairsResult, RoutingTables, compute_routes

MEDIUM_PJ_PER_BIT = 4.4472  # 10 cm textile line
REFERENCE_K = 16  # mesh size the controller powers were measured on
CLOCK_MHZ = 100.0


@dataclass(frozen=True)
class ControlConfig:
    # fixed control period; upload slots share what the download phase leaves
    frame_cycles: int | None = 7168
    slot_cycles: int | None = None  # explicit slot length; overrides frame_cycles
    download_cycles: int | None = None  # None: time to clock all rows over the medium
    medium_width_bits: int = 2
    report_bits: int = 8
    download_bits_per_node: int | None = None  # None: p entries of ceil(log2 K) bits, byte-rounded
    e_med_pj_per_bit: float = MEDIUM_PJ_PER_BIT
    deadlock_threshold_frames: int = 4
    # None -> one controller with unlimited energy
    controller_count: int | None = None
    controller_power_mw: tuple[float, float] = (6.94, 0.57)  # (dynamic, leakage) at REFERENCE_K
    controller_power_by_k: dict | None = None  # {K: (dynamic, leakage)} overrides the scaling rule
    controller_battery: BatterySpec = field(default_factory=BatterySpec)
    idle_leakage: bool = True
    clock_mhz: float = CLOCK_MHZ

    def __post_init__(self):
        if self.slot_cycles is None and self.frame_cycles is None:
            raise ValueError("set slot_cycles or frame_cycles")
        if self.slot_cycles is not None and self.slot_cycles < 1:
            raise ValueError("slot_cycles must be >= 1")
        if self.frame_cycles is not None and self.frame_cycles < 2:
            raise ValueError("frame_cycles must be >= 2")
        if self.medium_width_bits < 1:
            raise ValueError("medium_width_bits must be >= 1")
        if self.report_bits < 1:
            raise ValueError("report_bits must be >= 1")
        if self.e_med_pj_per_bit < 0:
            raise ValueError("e_med_pj_per_bit must be non-negative")
        if self.deadlock_threshold_frames < 1:
            raise ValueError("deadlock_threshold_frames must be >= 1")
        if self.controller_count is not None and self.controller_count < 1:
            raise ValueError("controller_count must be >= 1")

    def download_bits(self, K: int, p: int) -> int:
        if self.download_bits_per_node is not None:
            return self.download_bits_per_node
        raw = p * max(1, math.ceil(math.log2(K))) if K > 1 else p
        return 8 * math.ceil(raw / 8)

    def power_mw(self, K: int) -> tuple[float, float]:
        """(dynamic, leakage) mW; linear in K relative to the 4x4 measurement."""
        if self.controller_power_by_k and K in self.controller_power_by_k:
            dyn, leak = self.controller_power_by_k[K]
            return float(dyn), float(leak)
        dyn, leak = self.controller_power_mw
        scale = K / REFERENCE_K
        return dyn * scale, leak * scale

    def to_dict(self) -> dict:
        d = asdict(self)
        d["controller_battery"] = self.controller_battery.to_dict()
        d["controller_power_mw"] = list(self.controller_power_mw)
        return d


@dataclass(frozen=True)
class TdmaFrame:
    K: int
    slot_cycles: int
    download_cycles: int
    medium_width_bits: int

    @property
    def upload_cycles(self) -> int:
        return self.K * self.slot_cycles

    @property
    def frame_length(self) -> int:
        return self.upload_cycles + self.download_cycles


def plan_frame(K: int, config: ControlConfig, p: int = 3) -> TdmaFrame:
    if K < 1:
        raise ValueError("need at least one node")
    download = config.download_cycles
    if download is None:
        download = math.ceil(K * config.download_bits(K, p) / config.medium_width_bits)
    slot = config.slot_cycles
    if slot is None:
        slot = (config.frame_cycles - download) // K
        minimum = math.ceil(config.report_bits / config.medium_width_bits)
        if slot < minimum:
            raise ValueError(
                f"frame_cycles={config.frame_cycles} leaves {slot} cycles per upload slot for"
                f" K={K}; a report needs {minimum}"
            )
    return TdmaFrame(K, int(slot), int(download), config.medium_width_bits)


@dataclass(frozen=True)
class StatusReport:
    node: int
    battery_level: int
    deadlock_flag: bool


def detect_deadlock(stall_cycles: int | None, threshold_frames: int, frame: TdmaFrame) -> bool:
    """A packet queued longer than ``threshold_frames`` frames signals deadlock."""
    if stall_cycles is None:
        return False
    return stall_cycles > threshold_frames * frame.frame_length


def report_energy(config: ControlConfig) -> float:
    return config.report_bits * config.e_med_pj_per_bit


def collect_reports(nodes: Sequence, now: int, frame: TdmaFrame, config: ControlConfig,
                    levels: int) -> list[StatusReport]:
    """One report per live node in slot order, each debited to the node's overhead.

    ``nodes`` are objects with ``id``, ``battery``, ``OH`` and a
    ``stall_cycles(now)`` method; dead nodes stay silent. A node whose
    battery gives out while transmitting its report does not get it through.
    """
    cost = report_energy(config)
    out = []
    for node in nodes:
        if node.battery.dead:
            continue
        flag = detect_deadlock(node.stall_cycles(now), config.deadlock_threshold_frames, frame)
        level = battery_level(node.battery, levels)
        ok = node.battery.can_supply(cost)
        node.OH += node.battery.consume(cost)
        if ok:
            out.append(StatusReport(node.id, level, flag))
    return out


def report_key(reports: Sequence[StatusReport], K: int) -> tuple:
    """Status vector with ``None`` for silent nodes; used for change detection."""
    key: list = [None] * K
    for r in reports:
        key[r.node] = (r.battery_level, r.deadlock_flag)
    return tuple(key)


@dataclass
class ControllerState:
    id: int
    active: bool
    battery: BatteryState | None  # None: unlimited energy
    dynamic_mw: float
    leakage_mw: float
    last_reports: tuple | None = None
    died_at: float | None = None
    energy_pj: float = 0.0

    @property
    def alive(self) -> bool:
        return self.battery is None or not self.battery.dead


@dataclass
class RoutingContext:
    topology: Topology
    mapping: Mapping
    algorithm: str
    Q: float
    levels: int
    backend: str | None = None


@dataclass
class TickOutcome:
    recomputed: bool = False
    tables: RoutingTables | None = None
    all_pairs: AllPairsResult | None = None
    weights: np.ndarray | None = None
    changed_rows: int = 0
    download_pj: float = 0.0
    deliver: bool = False  # tables reach nodes at the end of the download phase


def controller_tick(ctrl: ControllerState, reports: Sequence[StatusReport], frame: TdmaFrame,
                    ctx: RoutingContext, current: RoutingTables,
                    config: ControlConfig) -> TickOutcome:
    """Recompute routes iff the status vector changed; returns the download plan.

    Energy is not debited here; see :class:`ControlPlane` for the battery side.
    """
    K = ctx.topology.node_count
    key = report_key(reports, K)
    out = TickOutcome()
    if key == ctrl.last_reports:
        return out
    ctrl.last_reports = key
    levels = [0 if k is None else k[0] for k in key]
    deadlocked = [n for n, k in enumerate(key) if k is not None and k[1]]
    W, ap, rt = compute_routes(ctx.topology, ctx.mapping, ctx.algorithm, levels, ctx.Q,
                               ctx.levels, deadlocked, current, ctx.backend)
    changed = int(np.count_nonzero(np.any(rt.RT != current.RT, axis=1)))
    out.recomputed = True
    out.tables, out.all_pairs, out.weights = rt, ap, W
    out.changed_rows = changed
    out.download_pj = changed * config.download_bits(K, ctx.mapping.p) * config.e_med_pj_per_bit
    out.deliver = True
    return out


def pj_per_cycle(mw: float, clock_mhz: float = CLOCK_MHZ) -> float:
    # mW / MHz = nJ per cycle -> *1000 for pJ
    return mw / clock_mhz * 1000.0


class ControlPlane:
    """Active/idle controllers with failover in controller-id order."""

    def __init__(self, ctx: RoutingContext, config: ControlConfig, initial_key: tuple):
        self.ctx = ctx
        self.config = config
        K = ctx.topology.node_count
        dyn, leak = config.power_mw(K)
        self.finite = config.controller_count is not None
        count = config.controller_count or 1
        self.controllers = [
            ControllerState(c, c == 0, config.controller_battery.new() if self.finite else None,
                            dyn, leak)
            for c in range(count)
        ]
        self.controllers[0].last_reports = initial_key
        self.recomputations = 0
        self.changed_frames = 0
        self.download_pj = 0.0
        self.compute_pj = 0.0
        self._prev_key = initial_key

    @property
    def active(self) -> ControllerState | None:
        for c in self.controllers:
            if c.active and c.alive:
                return c
        return None

    @property
    def alive(self) -> bool:
        return any(c.alive for c in self.controllers)

    def _failover(self, at: float) -> None:
        for c in self.controllers:
            c.active = False
        for c in self.controllers:
            if c.alive:
                c.active = True
                c.last_reports = None  # state rebuilt from the next full collection
                return

    def prologue(self, cycles: int) -> float | None:
        """Leakage from power-up to the first status collection.

        Returns the cycle at which the last controller died, if all did.
        """
        if not self.finite or cycles <= 0:
            return None
        clk = self.config.clock_mhz
        for c in self.controllers:
            if not c.alive or not (c.active or self.config.idle_leakage):
                continue
            rate = pj_per_cycle(c.leakage_mw, clk)
            need = rate * cycles
            usable = c.battery.usable_pj()
            if usable > need:
                c.energy_pj += c.battery.consume(need)
                continue
            c.energy_pj += c.battery.consume(c.battery.residual_pj)
            c.battery.dead = True
            c.died_at = usable / rate if rate > 0 else 0.0
        if not self.active:
            self._failover(0.0)
        if not self.alive:
            return max(c.died_at for c in self.controllers)
        return None

    def tick(self, now: int, reports: Sequence[StatusReport], frame: TdmaFrame,
             current: RoutingTables) -> tuple[TickOutcome, float | None]:
        """Run one frame of controller work.

        Returns the outcome and, if every controller died during the frame,
        the cycle at which the last one did.
        """
        key = report_key(reports, self.ctx.topology.node_count)
        if key != self._prev_key:
            self.changed_frames += 1
        self._prev_key = key
        ctrl = self.active
        if ctrl is None:
            return TickOutcome(), float(now)
        out = controller_tick(ctrl, reports, frame, self.ctx, current, self.config)
        if out.recomputed:
            self.recomputations += 1
        self.download_pj += out.download_pj

        F = frame.frame_length
        clk = self.config.clock_mhz
        for c in self.controllers:
            if not c.alive:
                continue
            if c is ctrl:
                rate = pj_per_cycle(c.leakage_mw + (c.dynamic_mw if out.recomputed else 0.0), clk)
                extra = out.download_pj
            elif self.config.idle_leakage:
                rate, extra = pj_per_cycle(c.leakage_mw, clk), 0.0
            else:
                continue
            need = rate * F + extra
            c.energy_pj += need if c.battery is None else 0.0
            if c is ctrl:
                self.compute_pj += rate * F
            if c.battery is None:
                continue
            usable = c.battery.usable_pj()
            if usable > need:
                c.energy_pj += c.battery.consume(need)
                continue
            # dies within this frame
            c.energy_pj += c.battery.consume(c.battery.residual_pj)
            c.battery.dead = True
            c.died_at = now + (usable / rate if rate > 0 else 0.0)
            if c is ctrl and usable < rate * frame.download_cycles + extra:
                out.deliver = False
        if self.finite:
            if not ctrl.alive:
                self._failover(ctrl.died_at)
            if not self.alive:
                return out, max(c.died_at for c in self.controllers)
        return out, None
