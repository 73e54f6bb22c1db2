"""Experiment configuration: one JSON-serialisable record per run or sweep."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .app import AppSpec, AppSpecError, load_app
from .control import ControlConfig
from .platform import BatterySpec, Platform, PlatformError, parse_mesh, platform_from_dict
from .sim import SimConfig

CONFIG_ENV = "ETSIM_CONFIG"
DEFAULT_SIZES = ("4x4", "5x5", "6x6", "7x7", "8x8")
DEFAULT_COUNTS = (1, 2, 3, 4, 6, 8, 10, 12, 16)
FORMATS = ("json", "csv", "text")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


@dataclass
class ExperimentConfig:
    app: Any = "aes128"  # preset name, JSON path or inline dict
    packet_bits: int | None = None
    mesh: str = "4x4"
    platform: dict = field(default_factory=dict)  # link, battery, levels, mapping, link_length_cm
    control: dict = field(default_factory=dict)  # ControlConfig fields
    sim: dict = field(default_factory=dict)  # SimConfig fields (algorithm excluded)
    algorithm: str = "ear"
    sizes: list = field(default_factory=lambda: list(DEFAULT_SIZES))
    controller_counts: list = field(default_factory=lambda: list(DEFAULT_COUNTS))
    bound_comm: Any = "min-hop"  # zero | min-hop | [c_1, ..., c_p]
    format: str = "json"
    output: str | None = None
    seed: int = 0

    def __post_init__(self):
        self.algorithm = str(self.algorithm).lower()
        if self.algorithm not in ("ear", "sdr"):
            raise ConfigError(f"algorithm: expected 'ear' or 'sdr', got {self.algorithm!r}")
        if self.format not in FORMATS:
            raise ConfigError(f"format: expected one of {FORMATS}, got {self.format!r}")
        for s in [self.mesh, *self.sizes]:
            try:
                parse_mesh(str(s))
            except PlatformError as exc:
                raise ConfigError(str(exc)) from exc
        if not self.sizes:
            raise ConfigError("sizes: need at least one mesh size")
        for c in self.controller_counts:
            if not isinstance(c, int) or c < 1:
                raise ConfigError(f"controller_counts: counts must be positive integers, got {c!r}")
        if isinstance(self.bound_comm, str):
            if self.bound_comm not in ("zero", "min-hop"):
                raise ConfigError(f"bound_comm: expected 'zero', 'min-hop' or a list, got {self.bound_comm!r}")
        elif not isinstance(self.bound_comm, (list, tuple)):
            raise ConfigError("bound_comm: expected 'zero', 'min-hop' or a list")
        if "algorithm" in self.sim:
            raise ConfigError("sim.algorithm: set the top-level 'algorithm' field instead")

    # ------------------------------------------------------------- builders

    def build_app(self) -> AppSpec:
        try:
            return load_app(self.app, self.packet_bits)
        except AppSpecError as exc:
            raise ConfigError(f"app: {exc}") from exc

    def build_platform(self, app: AppSpec, mesh: str | None = None) -> Platform:
        data = dict(self.platform)
        topo = {"mesh": mesh or self.mesh, "link_length_cm": data.pop("link_length_cm", 1.0)}
        data["topology"] = topo
        try:
            return platform_from_dict(data, app)
        except PlatformError as exc:
            raise ConfigError(str(exc)) from exc
        except TypeError as exc:
            raise ConfigError(f"platform: {exc}") from exc

    def build_control(self, **overrides) -> ControlConfig:
        data = {**self.control, **overrides}
        if isinstance(data.get("controller_battery"), dict):
            battery = dict(data["controller_battery"])
            if "discharge_table" in battery:
                battery["discharge_table"] = tuple(tuple(r) for r in battery["discharge_table"])
            data["controller_battery"] = BatterySpec(**battery)
        if "controller_power_mw" in data:
            data["controller_power_mw"] = tuple(data["controller_power_mw"])
        if isinstance(data.get("controller_power_by_k"), dict):
            data["controller_power_by_k"] = {
                int(k): tuple(v) for k, v in data["controller_power_by_k"].items()
            }
        try:
            return ControlConfig(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"control: {exc}") from exc

    def build_sim(self, algorithm: str | None = None) -> SimConfig:
        try:
            return SimConfig(algorithm=algorithm or self.algorithm, seed=self.seed, **self.sim)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"sim: {exc}") from exc

    def with_battery(self, model: str) -> "ExperimentConfig":
        platform = dict(self.platform)
        platform["battery"] = {**platform.get("battery", {}), "model": model}
        return replace(self, platform=platform)

    # ------------------------------------------------------------- serialisation

    def to_dict(self) -> dict:
        return asdict(self)

    def resolved(self) -> dict:
        """Config plus every default it implies, for self-describing outputs."""
        app = self.build_app()
        return {
            "experiment": self.to_dict(),
            "app": app.to_dict(),
            "platform": self.build_platform(app).describe(),
            "control": self.build_control().to_dict(),
            "sim": asdict(self.build_sim()),
        }


def config_from_dict(data: dict) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None = None) -> ExperimentConfig:
    """Load a JSON config; falls back to $ETSIM_CONFIG, then to defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return ExperimentConfig()
    p = Path(path)
    try:
        data = json.loads(p.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config: file not found: {p}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {p} is not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be an object")
    return config_from_dict(data)
