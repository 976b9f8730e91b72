"""
Coalition formation for resource-constrained UAV swarms
"""

from .config import Settings, get_settings
from .errors import ChromosomeStateError, CoalitionError, ConfigurationError, UnknownUavError
from .mission import CampaignConfig, CampaignResult, MissionReport, run_campaign, run_mission
from .models import CoalitionAssignment, ObjectiveBreakdown, ObjectiveWeights, Scenario, TaskSpec, Uav
from .qiga import QigaConfig, QuantumGeneticOptimizer
from .reputation import ReputationLedger
from .scenario import ScenarioStream, generate_scenario, load_scenario, save_scenario

__version__ = "1.0.0"

__all__ = [
    "CampaignConfig",
    "CampaignResult",
    "ChromosomeStateError",
    "CoalitionAssignment",
    "CoalitionError",
    "ConfigurationError",
    "MissionReport",
    "ObjectiveBreakdown",
    "ObjectiveWeights",
    "QigaConfig",
    "QuantumGeneticOptimizer",
    "ReputationLedger",
    "Scenario",
    "ScenarioStream",
    "Settings",
    "TaskSpec",
    "Uav",
    "UnknownUavError",
    "generate_scenario",
    "get_settings",
    "load_scenario",
    "run_campaign",
    "run_mission",
    "save_scenario",
]
