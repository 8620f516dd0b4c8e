"""Networked device-free sensing: simulation and two-phase estimation."""

from .geometry import GridConfig, SPEED_OF_LIGHT
from .scenario import Scenario, ScenarioConfig
from .ofdm import OfdmConfig
from .sparse import LassoConfig
from .ranging import RangeTable
from .association import AssociationConfig, SensingResult
from .localizer import GnConfig
from .harness import ExperimentConfig, fast_config, full_config, run_experiment

__all__ = [
    "GridConfig",
    "SPEED_OF_LIGHT",
    "Scenario",
    "ScenarioConfig",
    "OfdmConfig",
    "LassoConfig",
    "RangeTable",
    "AssociationConfig",
    "SensingResult",
    "GnConfig",
    "ExperimentConfig",
    "fast_config",
    "full_config",
    "run_experiment",
]
