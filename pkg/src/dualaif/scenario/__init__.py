"""Runnable experiments binding the building and community layers."""
from .assets import (
    EssPhysical,
    MarketContext,
    SignalDiscretizer,
    apply_reduction,
    building_power_kw,
    discretize_building_signal,
    discretize_flow,
    step_ess,
)
from .baseline import BaselineResult, baseline_full_information
from .config import ConfigError, default_config, extreme_pricing, load_config, validate
from .runs import (
    RunReport,
    ambiguity_monotone,
    run_building_day,
    run_community_day,
    sweep_ambiguity,
    write_report,
)

__all__ = [
    "EssPhysical", "MarketContext", "SignalDiscretizer", "apply_reduction", "building_power_kw",
    "discretize_building_signal", "discretize_flow", "step_ess", "BaselineResult",
    "baseline_full_information", "ConfigError", "default_config", "extreme_pricing", "load_config",
    "validate", "RunReport", "ambiguity_monotone", "run_building_day", "run_community_day",
    "sweep_ambiguity", "write_report",
]
