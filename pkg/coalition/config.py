"""
Configuration management for the coalition-formation engine
"""

import math
from functools import lru_cache
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Engine settings"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="COALITION_",
        case_sensitive=False,
        extra="ignore",
    )

    # Scenario generation
    n_resources: int = 5
    region_side: float = 100.0
    uav_speed: float = 1.0
    resource_range: Tuple[float, float] = (1.0, 14.0)
    requirement_range: Tuple[float, float] = (5.0, 15.0)
    carry_probability: float = 0.7
    need_probability: float = 0.6
    resource_cost: float = 1.0

    # Objective weights
    eta1: float = 10.0
    eta2: float = 1.0
    gamma: float = 1.0e4
    delta: float = 0.1
    call_radius: Optional[float] = None
    travel_once_per_member: bool = False

    # QIGA
    qiga_population_size: int = 200
    qiga_max_iterations: int = 500
    qiga_rotation_angle: float = 0.01 * math.pi
    qiga_renormalize: bool = True

    # NSGA-II
    nsga2_population_size: int = 200
    nsga2_max_iterations: int = 500
    nsga2_mutation_prob: float = 0.10
    nsga2_crossover_prob: float = 0.90
    nsga2_crossover_distribution_index: float = 20.0
    nsga2_mutation_distribution_index: float = 100.0

    # Campaign
    missions: int = 30
    reputation_mode: Literal["additive", "decay"] = "decay"
    decay_kappa: float = 0.95
    initial_reputation: float = 0.0
    selfish_contribution: float = 0.5
    deplete_resources: bool = False

    # Output
    output_directory: str = "results"
    log_level: str = "INFO"

    def default_call_radius(self) -> float:
        """The region diagonal unless configured explicitly"""
        if self.call_radius is not None:
            return self.call_radius
        return self.region_side * math.sqrt(2.0)

    def provenance(self) -> Dict[str, Any]:
        """Settings snapshot embedded in every output header"""
        return self.model_dump(mode="json")


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance"""
    return Settings()


def validate_generation_params(data: Dict[str, Any]) -> List[str]:
    """Validate scenario generation parameters and return list of errors"""
    errors = []

    counts = (("n_uavs", "Number of UAVs", None), ("n_tasks", "Number of tasks", None), ("n_resources", "Number of resources", 5))
    for key, label, default in counts:
        value = data.get(key, default)
        if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
            errors.append(f"{label} must be a positive integer (got {value!r})")

    region_side = data.get("region_side", 1.0)
    if region_side is None or region_side <= 0:
        errors.append(f"Region side must be positive (got {region_side!r})")

    speed = data.get("speed", 1.0)
    if speed is None or speed <= 0:
        errors.append(f"UAV speed must be positive (got {speed!r})")

    for key, label in (("resource_range", "Resource range"), ("requirement_range", "Requirement range")):
        bounds = data.get(key)
        if bounds is None:
            continue
        if len(bounds) != 2:
            errors.append(f"{label} must have exactly two bounds")
            continue
        low, high = bounds
        if low < 0 or high < low:
            errors.append(f"{label} must satisfy 0 <= low <= high (got {low}, {high})")
        elif key == "requirement_range" and high <= 0:
            errors.append(f"{label} upper bound must be positive so every task requires something")

    fraction = data.get("contribution_fraction", 0.5)
    if fraction is None or not 0.0 <= fraction <= 1.0:
        errors.append(f"Contribution fraction must be in [0, 1] (got {fraction!r})")

    for key, label in (("carry_probability", "Carry probability"), ("need_probability", "Need probability")):
        probability = data.get(key, 1.0)
        if probability is None or not 0.0 < probability <= 1.0:
            errors.append(f"{label} must be in (0, 1] (got {probability!r})")

    return errors
