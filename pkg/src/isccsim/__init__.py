"""Latency-oriented radio and computation resource allocation for ISCC V2X
networks: scenario generation, closed-form metrics, sub-band search, SCA
power control, and a Monte Carlo experiment harness.
"""

__version__ = "0.1.0"

from .config import SystemConfig, desk_profile, load_config, paper_profile
from .scenario import ScenarioInstance, build_instance
from .metrics import (Allocation, ResourceDecision, TrialReport,
                      detection_probability, fa_threshold)
from .orchestrator import SCHEMES, run_joint, run_scheme
from .harness import AggregateResult, ExperimentSpec, run_experiment

__all__ = [
    "SystemConfig", "desk_profile", "paper_profile", "load_config",
    "ScenarioInstance", "build_instance",
    "Allocation", "ResourceDecision", "TrialReport",
    "detection_probability", "fa_threshold",
    "SCHEMES", "run_joint", "run_scheme",
    "ExperimentSpec", "AggregateResult", "run_experiment",
    "__version__",
]
