"""Partitioned application model: modules, job flow, operation counts."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

DEFAULT_PACKET_BITS = 128


class AppSpecError(ValueError):
    """Raised when an application description violates its invariants."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class ModuleSpec:
    id: int
    name: str
    energy_per_computation: float  # pJ
    compute_latency: int = 16  # cycles


@dataclass(frozen=True)
class JobFlow:
    steps: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class AppSpec:
    modules: tuple[ModuleSpec, ...]
    flow: JobFlow
    packet_bits: int = DEFAULT_PACKET_BITS
    name: str = field(default="custom", compare=False)

    @property
    def p(self) -> int:
        return len(self.modules)

    def module(self, module_id: int) -> ModuleSpec:
        return self.modules[module_id - 1]

    @property
    def energies(self) -> np.ndarray:
        return np.array([m.energy_per_computation for m in self.modules], dtype=float)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "modules": [
                {
                    "id": m.id,
                    "name": m.name,
                    "energy_pj": m.energy_per_computation,
                    "compute_latency": m.compute_latency,
                }
                for m in self.modules
            ],
            "flow": list(self.flow.steps),
            "packet_bits": self.packet_bits,
        }


def validate(app: AppSpec) -> list[str]:
    """Return every invariant violation of ``app``; an empty list means valid."""
    problems: list[str] = []
    ids = [m.id for m in app.modules]
    if not ids:
        problems.append("no modules")
    if sorted(ids) != list(range(1, len(ids) + 1)):
        problems.append(f"module ids must be unique and contiguous 1..p, got {ids}")
    for m in app.modules:
        if not m.energy_per_computation > 0:
            problems.append(f"module {m.id}: non-positive energy {m.energy_per_computation}")
        if m.compute_latency < 0:
            problems.append(f"module {m.id}: negative compute latency")
    if len(app.flow.steps) < 1:
        problems.append("empty job flow")
    known = set(ids)
    for pos, step in enumerate(app.flow.steps):
        if step not in known:
            problems.append(f"flow step {pos}: unknown module id {step}")
    for mid in sorted(known):
        if mid not in app.flow.steps:
            problems.append(f"module {mid} never appears in the flow (dead module)")
    if not (isinstance(app.packet_bits, (int, np.integer)) and app.packet_bits > 0):
        problems.append(f"packet_bits must be a positive integer, got {app.packet_bits!r}")
    return problems


def make_app(
    modules: Sequence[ModuleSpec],
    flow: Sequence[int],
    packet_bits: int = DEFAULT_PACKET_BITS,
    name: str = "custom",
) -> AppSpec:
    app = AppSpec(tuple(modules), JobFlow(tuple(int(s) for s in flow)), packet_bits, name)
    problems = validate(app)
    if problems:
        raise AppSpecError(problems)
    return app


def aes_preset(packet_bits: int = DEFAULT_PACKET_BITS, compute_latency: int = 16) -> AppSpec:
    """AES-128 cipher partitioned into three modules.

    Module 1 is SubBytes/ShiftRows, module 2 MixColumns and module 3
    KeyExpansion/AddRoundKey. With Nr = 10 rounds the flow is the initial
    AddRoundKey, nine full rounds, then the final SubBytes/ShiftRows and
    AddRoundKey.
    """
    modules = (
        ModuleSpec(1, "SubBytes/ShiftRows", 120.1, compute_latency),
        ModuleSpec(2, "MixColumns", 73.34, compute_latency),
        ModuleSpec(3, "KeyExpansion/AddRoundKey", 176.55, compute_latency),
    )
    rounds = 10
    flow = [3] + [1, 2, 3] * (rounds - 1) + [1, 3]
    return make_app(modules, flow, packet_bits, name="aes128")


PRESETS = {"aes128": aes_preset}


def op_counts(app: AppSpec) -> np.ndarray:
    """Operations per job for each module, f_1..f_p."""
    steps = np.asarray(app.flow.steps, dtype=np.int64)
    return np.bincount(steps - 1, minlength=app.p).astype(np.int64)


def normalized_energy(app: AppSpec, comm_per_op: Sequence[float]) -> np.ndarray:
    """Per-job energy of each module: f_i * (E_i + c_i)."""
    c = np.asarray(comm_per_op, dtype=float)
    if c.shape != (app.p,):
        raise ValueError(f"comm_per_op must have length {app.p}, got shape {c.shape}")
    if np.any(c < 0):
        raise ValueError("communication energies must be non-negative")
    return op_counts(app) * (app.energies + c)


def app_from_dict(data: dict) -> AppSpec:
    if "preset" in data:
        return load_app(data["preset"], packet_bits=data.get("packet_bits", DEFAULT_PACKET_BITS))
    try:
        modules = [
            ModuleSpec(
                int(m["id"]),
                str(m.get("name", f"module{m['id']}")),
                float(m["energy_pj"]),
                int(m.get("compute_latency", 16)),
            )
            for m in data["modules"]
        ]
        flow = data["flow"]
    except (KeyError, TypeError) as exc:
        raise AppSpecError([f"malformed app config: missing {exc}"]) from exc
    return make_app(modules, flow, int(data.get("packet_bits", DEFAULT_PACKET_BITS)),
                    name=str(data.get("name", "custom")))


def load_app(source: str | Path | dict, packet_bits: int | None = None) -> AppSpec:
    """Resolve a preset name, a JSON file path or an inline dict to an AppSpec."""
    if isinstance(source, dict):
        return app_from_dict(source)
    name = str(source)
    if name in PRESETS:
        return PRESETS[name](packet_bits or DEFAULT_PACKET_BITS)
    path = Path(name)
    if not path.exists():
        raise AppSpecError([f"unknown app preset or file: {name!r}"])
    data = json.loads(path.read_text())
    if packet_bits is not None:
        data["packet_bits"] = packet_bits
    return app_from_dict(data)
