"""
Named experiment setups and the builders that turn settings into run configs
"""

from typing import Dict, Literal, Mapping, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from .baselines import Nsga2Config
from .config import Settings
from .errors import ConfigurationError
from .mission import SOLVERS, CampaignConfig
from .models import GenerationParams, ObjectiveWeights
from .qiga import QigaConfig, RotationPolicy


def objective_weights(settings: Settings, overrides: Optional[Mapping[str, float]] = None) -> ObjectiveWeights:
    values = {"eta1": settings.eta1, "eta2": settings.eta2, "gamma": settings.gamma, "delta": settings.delta}
    unknown = set(overrides or {}) - set(values)
    if unknown:
        raise ConfigurationError(f"Unknown objective weights {sorted(unknown)}; choose from {', '.join(values)}")
    return ObjectiveWeights(**{**values, **(overrides or {})})


def build_generation_params(
    settings: Settings,
    n_uavs: int,
    n_tasks: int,
    n_resources: Optional[int] = None,
    selfish_ids: Tuple[int, ...] = (),
    failure_overrides: Optional[Dict[int, float]] = None,
    contribution_fraction: Optional[float] = None,
    weight_overrides: Optional[Mapping[str, float]] = None,
) -> GenerationParams:
    n_resources = n_resources or settings.n_resources
    return GenerationParams(
        n_uavs=n_uavs,
        n_tasks=n_tasks,
        n_resources=n_resources,
        region_side=settings.region_side,
        resource_range=settings.resource_range,
        requirement_range=settings.requirement_range,
        carry_probability=settings.carry_probability,
        need_probability=settings.need_probability,
        speed=settings.uav_speed,
        mu=(settings.resource_cost,) * n_resources,
        weights=objective_weights(settings, weight_overrides),
        call_radius=settings.default_call_radius(),
        selfish_ids=selfish_ids,
        contribution_fraction=settings.selfish_contribution if contribution_fraction is None else contribution_fraction,
        failure_overrides=failure_overrides or {},
    )


def build_campaign_config(
    settings: Settings,
    solver: str,
    seed: int,
    missions: Optional[int] = None,
    reputation_mode: Optional[str] = None,
    decay_kappa: Optional[float] = None,
) -> CampaignConfig:
    if solver not in SOLVERS:
        raise ConfigurationError(f"Unknown solver {solver!r}; choose from {', '.join(SOLVERS)}")
    return CampaignConfig(
        solver=solver,
        missions=missions or settings.missions,
        seed=seed,
        reputation_mode=reputation_mode or settings.reputation_mode,
        decay_kappa=settings.decay_kappa if decay_kappa is None else decay_kappa,
        initial_reputation=settings.initial_reputation,
        deplete_resources=settings.deplete_resources,
        travel_once_per_member=settings.travel_once_per_member,
        qiga=QigaConfig(
            population_size=settings.qiga_population_size,
            max_iterations=settings.qiga_max_iterations,
            rotation_policy=RotationPolicy.default(settings.qiga_rotation_angle),
            renormalize=settings.qiga_renormalize,
        ),
        nsga2=Nsga2Config(
            population_size=settings.nsga2_population_size,
            max_iterations=settings.nsga2_max_iterations,
            mutation_prob=settings.nsga2_mutation_prob,
            crossover_prob=settings.nsga2_crossover_prob,
            crossover_distribution_index=settings.nsga2_crossover_distribution_index,
            mutation_distribution_index=settings.nsga2_mutation_distribution_index,
        ),
    )


class ExperimentPreset(BaseModel):
    """A reproducible experiment: scale, fleet behaviour, solvers and seeds"""

    model_config = ConfigDict(frozen=True)

    name: str
    description: str
    n_uavs: int = Field(..., gt=0)
    n_tasks: int = Field(..., gt=0)
    solvers: Tuple[str, ...] = SOLVERS
    missions: int = Field(default=30, ge=1)
    seeds: Tuple[int, ...] = (1,)
    selfish_ids: Tuple[int, ...] = ()
    failure_overrides: Dict[int, float] = Field(default_factory=dict)
    reputation_mode: Optional[Literal["additive", "decay"]] = None
    decay_kappa: Optional[float] = Field(default=None, ge=0, le=1)
    weights: Dict[str, float] = Field(default_factory=dict, description="Objective weight overrides")

    @property
    def scale(self) -> str:
        return f"{self.n_uavs}-{self.n_tasks}"

    def generation_params(self, settings: Settings, n_resources: Optional[int] = None) -> GenerationParams:
        return build_generation_params(
            settings,
            self.n_uavs,
            self.n_tasks,
            n_resources,
            selfish_ids=self.selfish_ids,
            failure_overrides=self.failure_overrides,
            weight_overrides=self.weights,
        )

    def campaign_config(self, settings: Settings, solver: str, seed: int, missions: Optional[int] = None) -> CampaignConfig:
        return build_campaign_config(
            settings,
            solver,
            seed,
            missions or self.missions,
            reputation_mode=self.reputation_mode,
            decay_kappa=self.decay_kappa,
        )


def _scale_preset(n_uavs: int, n_tasks: int) -> ExperimentPreset:
    return ExperimentPreset(
        name=f"scale-{n_uavs}-{n_tasks}",
        description=f"Completed tasks and violations, {n_uavs} UAVs / {n_tasks} tasks, all solvers",
        n_uavs=n_uavs,
        n_tasks=n_tasks,
        seeds=(1, 2, 3, 4, 5),
    )


PRESETS: Dict[str, ExperimentPreset] = {
    preset.name: preset
    for preset in (
        _scale_preset(8, 2),
        _scale_preset(16, 4),
        _scale_preset(32, 8),
        _scale_preset(64, 16),
        _scale_preset(128, 24),
        ExperimentPreset(
            name="selfish-8-2",
            description="Reputation trajectories with UAVs 4 and 5 delivering half of their pledges",
            n_uavs=8,
            n_tasks=2,
            solvers=("moqga",),
            seeds=(1, 2, 3),
            selfish_ids=(4, 5),
            reputation_mode="decay",
            weights={"eta2": 4.0},
        ),
        ExperimentPreset(
            name="unreliable-8-2",
            description="Coalitions when UAVs 4 and 5 fail 90% of the time",
            n_uavs=8,
            n_tasks=2,
            solvers=("moqga",),
            missions=10,
            seeds=(1, 2, 3),
            failure_overrides={4: 0.9, 5: 0.9},
            weights={"eta1": 1000.0},
        ),
    )
}

# alternate names accepted wherever a preset name is
PRESET_ALIASES: Dict[str, str] = {
    f"table2-{preset.scale}": preset.name for preset in PRESETS.values() if preset.name.startswith("scale-")
}


def get_preset(name: str) -> ExperimentPreset:
    try:
        return PRESETS[PRESET_ALIASES.get(name, name)]
    except KeyError:
        raise ConfigurationError(f"Unknown preset {name!r}; run 'presets list' to see the choices") from None

