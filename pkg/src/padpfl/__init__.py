"""Differentially private federated learning with personalized impact factors."""

from .accounting import NoiseCalibration, PrivacyParams, calibrate, calibrate_schedule
from .bounds import AnalysisConstants, convergence_bound, estimate_constants
from .config import ScenarioConfig, load_config, load_preset
from .experiment import run_experiment, run_trace, run_variants
from .schedule import ImpactSchedule

__all__ = [
    "AnalysisConstants",
    "ImpactSchedule",
    "NoiseCalibration",
    "PrivacyParams",
    "ScenarioConfig",
    "calibrate",
    "calibrate_schedule",
    "convergence_bound",
    "estimate_constants",
    "load_config",
    "load_preset",
    "run_experiment",
    "run_trace",
    "run_variants",
]
