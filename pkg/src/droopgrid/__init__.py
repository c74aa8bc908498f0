"""Droop-controlled two-inverter microgrid: detailed and reduced-order models,
equilibria, linearization, stability regions and time-domain simulation."""
from .config import MicrogridConfig, parse_config, preset_config, serialize_config
from .equilibrium import Equilibrium, EquilibriumError, find_equilibrium
from .linearize import linearize_analytic, linearize_numeric
from .models import ALL_KINDS, ModelKind
from .sim import SimOptions, Trajectory, scenario, simulate
from .stability import EigenSet, StabilityBoundary, eigen, eigenloci_sweep, stability_boundary

__all__ = [
    "ALL_KINDS", "EigenSet", "Equilibrium", "EquilibriumError", "MicrogridConfig", "ModelKind",
    "SimOptions", "StabilityBoundary", "Trajectory", "eigen", "eigenloci_sweep", "find_equilibrium",
    "linearize_analytic", "linearize_numeric", "parse_config", "preset_config", "scenario",
    "serialize_config", "simulate", "stability_boundary",
]
