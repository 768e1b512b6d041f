"""Simulation-model contract and the bundled feeder simulator."""

from .feeder import FeederModel, OperatingInputs, load_profiles, preset, save_profiles
from .kpi import compute_spf, compute_vi, compute_vispf
from .scenario import ImpactEvent, KPIResult, Scenario, impact_events, resolve_target
from .sm import (
    REGULATOR_HANDLERS,
    SUPPORTED_HANDLERS,
    CachedSM,
    FeederSM,
    SimState,
    SMError,
    SubprocessSM,
    UnsupportedHandler,
    apply_impact,
)

__all__ = [
    "CachedSM",
    "FeederModel",
    "FeederSM",
    "ImpactEvent",
    "KPIResult",
    "OperatingInputs",
    "REGULATOR_HANDLERS",
    "SMError",
    "SUPPORTED_HANDLERS",
    "Scenario",
    "SimState",
    "SubprocessSM",
    "UnsupportedHandler",
    "apply_impact",
    "compute_spf",
    "compute_vi",
    "compute_vispf",
    "impact_events",
    "load_profiles",
    "preset",
    "resolve_target",
    "save_profiles",
]
