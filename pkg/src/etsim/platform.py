"""Physical substrate: mesh topology, node mapping, link energy and batteries."""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping as MappingT, Sequence

import numpy as np

from .app import AppSpec

DEFAULT_BATTERY_PJ = 60000.0
DEFAULT_CUTOFF_VOLTS = 3.0
# (state of charge, volts); plateau then cliff. Overridable from config.
DEFAULT_DISCHARGE_TABLE = (
    (1.0, 3.6),
    (0.8, 3.55),
    (0.5, 3.5),
    (0.2, 3.4),
    (0.05, 3.1),
    (0.0, 2.5),
)
# Per-bit switching energy of textile transmission lines, (cm, pJ/bit).
TEXTILE_LINE_POINTS = ((1.0, 0.4472), (10.0, 4.4472), (20.0, 11.867), (100.0, 53.082))


class PlatformError(ValueError):
    pass


# --------------------------------------------------------------------------
# topology


@dataclass(frozen=True)
class Topology:
    node_count: int
    edges: MappingT[tuple[int, int], float]
    width: int | None = None
    height: int | None = None
    coords: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        for (i, j), length in self.edges.items():
            if i == j:
                raise PlatformError(f"self-edge at node {i}")
            if not (0 <= i < self.node_count and 0 <= j < self.node_count):
                raise PlatformError(f"edge ({i}, {j}) references a missing node")
            if not length > 0:
                raise PlatformError(f"edge ({i}, {j}) has non-positive length {length}")

    @property
    def is_mesh(self) -> bool:
        return self.coords is not None

    def length_matrix(self) -> np.ndarray:
        """K x K link lengths with ``inf`` for absent edges and 0 on the diagonal."""
        L = np.full((self.node_count, self.node_count), np.inf)
        np.fill_diagonal(L, 0.0)
        for (i, j), length in self.edges.items():
            L[i, j] = length
        return L

    def neighbors(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.node_count)]
        for i, j in sorted(self.edges):
            out[i].append(j)
        return out

    def label(self) -> str:
        if self.is_mesh:
            return f"{self.width}x{self.height}"
        return f"K{self.node_count}"


def mesh(width: int, height: int, link_length_cm: float = 1.0) -> Topology:
    """2D mesh; node id = y * width + x, bidirectional links between 4-neighbours."""
    if width < 1 or height < 1:
        raise PlatformError(f"mesh dimensions must be >= 1, got {width}x{height}")
    if not link_length_cm > 0:
        raise PlatformError("link length must be positive")
    coords = tuple((x, y) for y in range(height) for x in range(width))
    edges: dict[tuple[int, int], float] = {}
    for y in range(height):
        for x in range(width):
            a = y * width + x
            if x + 1 < width:
                edges[(a, a + 1)] = edges[(a + 1, a)] = float(link_length_cm)
            if y + 1 < height:
                edges[(a, a + width)] = edges[(a + width, a)] = float(link_length_cm)
    return Topology(width * height, edges, width, height, coords)


def parse_mesh(text: str) -> tuple[int, int]:
    """Parse ``"WxH"``; raises PlatformError naming the field on bad input."""
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise PlatformError(f"mesh: expected WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise PlatformError(f"mesh: dimensions must be >= 1, got {text!r}")
    return w, h


# --------------------------------------------------------------------------
# mapping


@dataclass(frozen=True)
class Mapping:
    assignment: tuple[int, ...]  # node -> module id (1-based)
    p: int

    def __post_init__(self):
        bad = [m for m in self.assignment if not 1 <= m <= self.p]
        if bad:
            raise PlatformError(f"mapping references unknown module ids {sorted(set(bad))}")

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(np.asarray(self.assignment) - 1, minlength=self.p)

    def members(self, module_id: int) -> list[int]:
        """Nodes hosting ``module_id`` in ascending id order (the set S_i)."""
        return [j for j, m in enumerate(self.assignment) if m == module_id]

    def missing_modules(self) -> list[int]:
        return [i + 1 for i, n in enumerate(self.counts) if n == 0]


def parity_map(topology: Topology, app: AppSpec) -> Mapping:
    """Checkerboard mapping for the three-module AES partition.

    With m(v) = v mod 2: m(x)+m(y) == 2 -> module 1, 0 -> module 2, 1 -> module 3.
    """
    if app.p != 3:
        raise PlatformError("parity map is AES-specific (requires p = 3)")
    if not topology.is_mesh:
        raise PlatformError("parity map needs mesh coordinates")
    rule = {2: 1, 0: 2, 1: 3}
    return Mapping(tuple(rule[x % 2 + y % 2] for x, y in topology.coords), 3)


def optimal_counts(eps: Sequence[float], K: int) -> np.ndarray:
    """Real-valued duplicate counts proportional to normalized energy."""
    e = np.asarray(eps, dtype=float)
    if np.any(e <= 0):
        raise ValueError("normalized energies must be positive")
    if K < 1:
        raise ValueError("K must be positive")
    return K * e / e.sum()


# --------------------------------------------------------------------------
# link energy


@dataclass(frozen=True)
class LinkEnergyModel:
    points: tuple[tuple[float, float], ...] = TEXTILE_LINE_POINTS
    extrapolate: bool = False

    def __post_init__(self):
        lengths = [p[0] for p in self.points]
        energies = [p[1] for p in self.points]
        if len(self.points) < 2:
            raise PlatformError("link model needs at least two calibration points")
        if any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise PlatformError("calibration lengths must be strictly increasing")
        if any(b <= a for a, b in zip(energies, energies[1:])):
            raise PlatformError("pJ/bit must be strictly increasing with length")

    def pj_per_bit(self, length_cm: float) -> float:
        if not length_cm > 0:
            raise ValueError(f"link length must be positive, got {length_cm}")
        xs = [p[0] for p in self.points]
        ys = [p[1] for p in self.points]
        if length_cm < xs[0] or length_cm > xs[-1]:
            if not self.extrapolate:
                raise ValueError(
                    f"length {length_cm} cm outside calibration span [{xs[0]}, {xs[-1]}]"
                    " (enable extrapolate)"
                )
            k = 0 if length_cm < xs[0] else len(xs) - 2
            slope = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])
            value = ys[k] + slope * (length_cm - xs[k])
            if value <= 0:
                raise ValueError(f"extrapolated energy non-positive at {length_cm} cm")
            return value
        return float(np.interp(length_cm, xs, ys))


def packet_energy(model: LinkEnergyModel, length_cm: float, packet_bits: int) -> float:
    """Energy (pJ) to send one packet over a line; every bit is assumed to switch."""
    if not (isinstance(packet_bits, (int, np.integer)) and packet_bits > 0):
        raise ValueError(f"packet_bits must be a positive integer, got {packet_bits!r}")
    return model.pj_per_bit(length_cm) * packet_bits


def min_hop_packet_energy(topology: Topology, model: LinkEnergyModel, packet_bits: int) -> float:
    if not topology.edges:
        return 0.0
    return min(packet_energy(model, L, packet_bits) for L in set(topology.edges.values()))


# --------------------------------------------------------------------------
# batteries


def _interp_desc(table: tuple[tuple[float, float], ...], soc: float) -> float:
    # table is sorted by soc descending
    socs = [-s for s, _ in table]
    k = bisect.bisect_left(socs, -soc)
    if k == 0:
        return table[0][1]
    if k >= len(table):
        return table[-1][1]
    (s0, v0), (s1, v1) = table[k - 1], table[k]
    if s0 == s1:
        return v1
    return v0 + (v1 - v0) * (soc - s0) / (s1 - s0)


@dataclass
class BatteryState:
    initial_pj: float = DEFAULT_BATTERY_PJ
    consumed_pj: float = 0.0
    model: str = "ideal"  # "ideal" | "thin-film"
    discharge_table: tuple[tuple[float, float], ...] = DEFAULT_DISCHARGE_TABLE
    cutoff_volts: float = DEFAULT_CUTOFF_VOLTS
    efficiency: float = 1.0
    dead: bool = False

    def __post_init__(self):
        if self.model not in ("ideal", "thin-film"):
            raise PlatformError(f"battery model must be 'ideal' or 'thin-film', got {self.model!r}")
        if not self.initial_pj > 0:
            raise PlatformError("battery capacity must be positive")
        if not 0 < self.efficiency <= 1:
            raise PlatformError("battery efficiency must be in (0, 1]")
        table = tuple((float(s), float(v)) for s, v in self.discharge_table)
        socs = [s for s, _ in table]
        if socs[0] != 1.0 or socs[-1] != 0.0 or any(b >= a for a, b in zip(socs, socs[1:])):
            raise PlatformError("discharge table SoC must decrease strictly from 1.0 to 0.0")
        if any(v1 > v0 for (_, v0), (_, v1) in zip(table, table[1:])):
            raise PlatformError("discharge table voltage must be non-increasing")
        self.discharge_table = table
        self.dead = self.dead or not self._alive_at(self.consumed_pj)

    @property
    def residual_pj(self) -> float:
        return self.initial_pj - self.consumed_pj

    @property
    def remaining_fraction(self) -> float:
        return self.residual_pj / self.initial_pj

    @property
    def alive(self) -> bool:
        return not self.dead

    def voltage(self, consumed_pj: float | None = None) -> float:
        c = self.consumed_pj if consumed_pj is None else consumed_pj
        if self.model == "ideal":
            return self.discharge_table[0][1] if c < self.initial_pj else 0.0
        return _interp_desc(self.discharge_table, 1.0 - c / self.initial_pj)

    def _alive_at(self, consumed: float) -> bool:
        if self.model == "ideal":
            return consumed < self.initial_pj
        return self.voltage(consumed) >= self.cutoff_volts

    def can_supply(self, amount: float) -> bool:
        return self.alive and self.consumed_pj + amount / self.efficiency <= self.initial_pj

    def consume(self, amount: float) -> float:
        """Draw ``amount`` pJ in place; returns the energy actually drawn.

        The draw is clamped at the remaining capacity. Death is sticky: once
        the cutoff is crossed, the residual charge is never used again.
        """
        if amount < 0:
            raise ValueError("cannot consume a negative amount")
        if self.dead:
            return 0.0
        drawn = min(amount / self.efficiency, self.residual_pj)
        self.consumed_pj += drawn
        if not self._alive_at(self.consumed_pj):
            self.dead = True
        return drawn

    def usable_pj(self) -> float:
        """Energy that can still be drawn before the battery is declared dead."""
        if self.dead:
            return 0.0
        if self.model == "ideal":
            return self.residual_pj
        # first state of charge on the table where voltage falls below cutoff
        table = self.discharge_table
        soc_cut = 0.0
        for (s0, v0), (s1, v1) in zip(table, table[1:]):
            if v1 < self.cutoff_volts <= v0:
                soc_cut = s0 + (self.cutoff_volts - v0) * (s1 - s0) / (v1 - v0) if v1 != v0 else s0
                break
        return max(0.0, (1.0 - soc_cut) * self.initial_pj - self.consumed_pj)


def battery_consume(state: BatteryState, amount: float) -> BatteryState:
    """Functional counterpart of :meth:`BatteryState.consume`."""
    out = replace(state)
    out.consume(amount)
    return out


def battery_level(state: BatteryState, levels: int) -> int:
    """Quantized remaining-energy level in ``[0, levels)``; dead batteries report 0."""
    if levels < 2:
        raise ValueError("need at least two battery levels")
    if state.dead:
        return 0
    return min(levels - 1, int(math.floor(levels * state.remaining_fraction)))


# --------------------------------------------------------------------------
# platform bundle + config


@dataclass(frozen=True)
class BatterySpec:
    model: str = "thin-film"
    initial_pj: float = DEFAULT_BATTERY_PJ
    discharge_table: tuple[tuple[float, float], ...] = DEFAULT_DISCHARGE_TABLE
    cutoff_volts: float = DEFAULT_CUTOFF_VOLTS
    efficiency: float = 1.0

    def new(self) -> BatteryState:
        return BatteryState(self.initial_pj, 0.0, self.model, self.discharge_table,
                            self.cutoff_volts, self.efficiency)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "initial_pj": self.initial_pj,
            "discharge_table": [list(r) for r in self.discharge_table],
            "cutoff_volts": self.cutoff_volts,
            "efficiency": self.efficiency,
        }


@dataclass(frozen=True)
class Platform:
    topology: Topology
    mapping: Mapping
    link_model: LinkEnergyModel = field(default_factory=LinkEnergyModel)
    battery: BatterySpec = field(default_factory=BatterySpec)
    levels: int = 8

    @property
    def K(self) -> int:
        return self.topology.node_count

    def hop_energy_matrix(self, packet_bits: int) -> np.ndarray:
        E = np.zeros((self.K, self.K))
        for (i, j), length in self.topology.edges.items():
            E[i, j] = packet_energy(self.link_model, length, packet_bits)
        return E

    def describe(self) -> dict:
        out = {
            "topology": self.topology.label(),
            "K": self.K,
            "link_points": [list(p) for p in self.link_model.points],
            "link_extrapolate": self.link_model.extrapolate,
            "battery": self.battery.to_dict(),
            "levels": self.levels,
            "mapping_counts": self.mapping.counts.tolist(),
        }
        if not self.topology.is_mesh:
            out["edges"] = [[i, j, L] for (i, j), L in sorted(self.topology.edges.items())]
        return out


def build_platform(
    app: AppSpec,
    width: int = 4,
    height: int = 4,
    link_length_cm: float = 1.0,
    battery: BatterySpec | None = None,
    levels: int = 8,
    mapping: str | Sequence[int] = "parity",
    link_model: LinkEnergyModel | None = None,
) -> Platform:
    topo = mesh(width, height, link_length_cm)
    return _assemble(app, topo, battery, levels, mapping, link_model)


def _assemble(app, topo, battery, levels, mapping, link_model) -> Platform:
    if isinstance(mapping, str):
        if mapping != "parity":
            raise PlatformError(f"mapping: unknown rule {mapping!r}")
        m = parity_map(topo, app)
    else:
        if len(mapping) != topo.node_count:
            raise PlatformError("mapping: assignment length must equal node count")
        m = Mapping(tuple(int(v) for v in mapping), app.p)
    if levels < 2:
        raise PlatformError("levels: N_B must be >= 2")
    return Platform(topo, m, link_model or LinkEnergyModel(), battery or BatterySpec(), levels)


def platform_from_dict(data: dict, app: AppSpec) -> Platform:
    """Build a platform from a config dict (see README for the schema)."""
    battery_cfg = dict(data.get("battery", {}))
    if "discharge_table" in battery_cfg:
        battery_cfg["discharge_table"] = tuple(tuple(r) for r in battery_cfg["discharge_table"])
    battery = BatterySpec(**battery_cfg)
    link_cfg = data.get("link", {})
    link_model = LinkEnergyModel(
        tuple(tuple(p) for p in link_cfg.get("points", TEXTILE_LINE_POINTS)),
        bool(link_cfg.get("extrapolate", False)),
    )
    topo_cfg = data.get("topology", {"mesh": "4x4"})
    if "mesh" in topo_cfg:
        w, h = parse_mesh(str(topo_cfg["mesh"]))
        topo = mesh(w, h, float(topo_cfg.get("link_length_cm", 1.0)))
    elif "edges" in topo_cfg:
        edges = {(int(i), int(j)): float(L) for i, j, L in topo_cfg["edges"]}
        topo = Topology(int(topo_cfg["node_count"]), edges)
    else:
        raise PlatformError("topology: need 'mesh' or 'edges'")
    return _assemble(app, topo, battery, int(data.get("levels", 8)),
                     data.get("mapping", "parity"), link_model)


def load_platform(path: str | Path, app: AppSpec) -> Platform:
    return platform_from_dict(json.loads(Path(path).read_text()), app)
