"""Energy-aware routing simulator for battery-powered mesh platforms."""

from .app import AppSpec, ModuleSpec, JobFlow, aes_preset, normalized_energy, op_counts, validate
from .bound import bound_for_mapping, upper_bound, verify_theorem1
from .platform import (
    BatterySpec,
    BatteryState,
    LinkEnergyModel,
    Platform,
    build_platform,
    mesh,
    optimal_counts,
    packet_energy,
    parity_map,
)
from .routing import all_pairs, build_routing_tables, weight_fn, weights_ear, weights_sdr
from .control import ControlConfig, plan_frame
from .sim import SimConfig, SimMetrics, run

__version__ = "0.1.0"
