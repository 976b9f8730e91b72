"""
Pydantic models shared by the optimizer, the baselines and the mission simulator
"""

from typing import Annotated, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

NonNegative = Annotated[float, Field(ge=0)]
Positive = Annotated[float, Field(gt=0)]
Position = Tuple[float, float]


class Uav(BaseModel):
    """An agent carrying a bundle of resources"""

    model_config = ConfigDict(frozen=True)

    id: int = Field(..., ge=0, description="UAV index")
    position: Position = Field(..., description="Planar coordinates (length units)")
    resources: Tuple[NonNegative, ...] = Field(..., description="Capacity per resource type")
    failure_rates: Tuple[NonNegative, ...] = Field(..., description="Failure rate per resource type")
    speed: Positive = Field(default=1.0, description="Length units per time unit")
    selfish: bool = Field(default=False, description="Delivers only part of what it pledges")
    contribution_fraction: float = Field(default=1.0, ge=0, le=1, description="Fraction of pledged resources delivered")
    failure_override: Optional[float] = Field(
        default=None, ge=0, lt=1, description="Injected per-mission failure probability"
    )

    @model_validator(mode="after")
    def check_consistency(self) -> "Uav":
        if len(self.resources) != len(self.failure_rates):
            raise ValueError("resources and failure_rates must have the same length")
        if not self.selfish and self.contribution_fraction != 1.0:
            raise ValueError("honest UAVs deliver everything they pledge (contribution_fraction = 1)")
        return self


class TaskSpec(BaseModel):
    """A point of interest and the resource bundle it needs"""

    model_config = ConfigDict(frozen=True)

    id: int = Field(..., ge=0, description="Task index")
    position: Position = Field(..., description="Planar coordinates (length units)")
    required: Tuple[NonNegative, ...] = Field(..., description="Required amount per resource type")

    @model_validator(mode="after")
    def check_requirement(self) -> "TaskSpec":
        if not any(value > 0 for value in self.required):
            raise ValueError("a task must require at least one resource")
        return self

    @property
    def total_requirement(self) -> float:
        return float(sum(self.required))


class ObjectiveWeights(BaseModel):
    """Weights of the scalarized objective, the penalty and the follower utility"""

    model_config = ConfigDict(frozen=True)

    eta1: NonNegative = Field(default=10.0, description="Reliability weight")
    eta2: NonNegative = Field(default=1.0, description="Reputation weight")
    gamma: NonNegative = Field(default=1.0e4, description="Penalty coefficient per unit of shortfall")
    delta: NonNegative = Field(default=0.1, description="Travel-time weight in follower utility")


class CoalitionAssignment(BaseModel):
    """A candidate coalition for one task with its derived matrices"""

    model_config = ConfigDict(frozen=True)

    task_id: int
    member_ids: Tuple[int, ...] = Field(default=(), description="Members in row order")
    n_resources: int = Field(..., gt=0)
    exec_cost: Tuple[Tuple[NonNegative, ...], ...] = Field(default=(), description="e_ij = mu_j * r_ij")
    exec_time: Tuple[Tuple[NonNegative, ...], ...] = Field(default=(), description="k_ij")
    travel_time: Tuple[NonNegative, ...] = Field(default=(), description="a_i, one per member")
    failure_rates: Tuple[Tuple[NonNegative, ...], ...] = Field(default=(), description="lambda_ij")

    @model_validator(mode="after")
    def check_shapes(self) -> "CoalitionAssignment":
        size = len(self.member_ids)
        if len(set(self.member_ids)) != size:
            raise ValueError("coalition members must be distinct")
        for name in ("exec_cost", "exec_time", "failure_rates"):
            matrix = getattr(self, name)
            if len(matrix) != size or any(len(row) != self.n_resources for row in matrix):
                raise ValueError(f"{name} must have shape {size} x {self.n_resources}")
        if len(self.travel_time) != size:
            raise ValueError("travel_time must have one entry per member")
        return self

    @property
    def is_empty(self) -> bool:
        return not self.member_ids


class Scenario(BaseModel):
    """Fleet, tasks and objective configuration of one mission"""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    uavs: List[Uav]
    tasks: List[TaskSpec]
    resource_cost_coeff: Tuple[Positive, ...] = Field(..., alias="mu", description="mu_j per resource")
    weights: ObjectiveWeights = Field(default_factory=ObjectiveWeights)
    call_radius: Positive = Field(..., description="Leader call distance (length units)")
    rng_seed: int = Field(..., ge=0, lt=2**64, alias="seed")

    @model_validator(mode="after")
    def check_dimensions(self) -> "Scenario":
        n_resources = len(self.resource_cost_coeff)
        for uav in self.uavs:
            if len(uav.resources) != n_resources:
                raise ValueError(f"UAV {uav.id} carries {len(uav.resources)} resource types, expected {n_resources}")
        for task in self.tasks:
            if len(task.required) != n_resources:
                raise ValueError(f"Task {task.id} lists {len(task.required)} resource types, expected {n_resources}")
        if len({uav.id for uav in self.uavs}) != len(self.uavs):
            raise ValueError("UAV ids must be unique")
        if len({task.id for task in self.tasks}) != len(self.tasks):
            raise ValueError("Task ids must be unique")
        return self

    @property
    def n_resources(self) -> int:
        return len(self.resource_cost_coeff)

    def uav(self, uav_id: int) -> Uav:
        for uav in self.uavs:
            if uav.id == uav_id:
                return uav
        raise KeyError(f"Unknown UAV id {uav_id}")

    def task(self, task_id: int) -> TaskSpec:
        for task in self.tasks:
            if task.id == task_id:
                return task
        raise KeyError(f"Unknown task id {task_id}")


class GenerationParams(BaseModel):
    """Parameters for random scenario generation"""

    model_config = ConfigDict(frozen=True)

    n_uavs: int = Field(..., gt=0, description="Number of UAVs (N)")
    n_tasks: int = Field(..., gt=0, description="Number of tasks (n)")
    n_resources: int = Field(default=5, gt=0, description="Number of resource types (N_r)")
    region_side: Positive = Field(default=100.0, description="Side of the square search region")
    resource_range: Tuple[NonNegative, NonNegative] = Field(default=(1.0, 14.0))
    requirement_range: Tuple[NonNegative, NonNegative] = Field(default=(5.0, 15.0))
    carry_probability: float = Field(default=0.7, gt=0, le=1, description="Chance a UAV carries a resource type")
    need_probability: float = Field(default=0.6, gt=0, le=1, description="Chance a task needs a resource type")
    speed: Positive = Field(default=1.0)
    mu: Optional[Tuple[Positive, ...]] = Field(default=None, description="Defaults to 1 per resource")
    weights: ObjectiveWeights = Field(default_factory=ObjectiveWeights)
    call_radius: Optional[Positive] = Field(default=None, description="Defaults to the region diagonal")
    selfish_ids: Tuple[int, ...] = Field(default=())
    contribution_fraction: float = Field(default=0.5, ge=0, le=1)
    failure_overrides: Dict[int, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_ranges(self) -> "GenerationParams":
        for name in ("resource_range", "requirement_range"):
            low, high = getattr(self, name)
            if high < low:
                raise ValueError(f"{name} is inverted")
        if self.requirement_range[1] <= 0:
            raise ValueError("requirement_range must allow positive requirements")
        if self.mu is not None and len(self.mu) != self.n_resources:
            raise ValueError("mu must list one coefficient per resource")
        if any(not 0 <= p < 1 for p in self.failure_overrides.values()):
            raise ValueError("failure overrides must be probabilities in [0, 1)")
        return self


class ObjectiveBreakdown(BaseModel):
    """Every scalar evaluation of one candidate coalition"""

    model_config = ConfigDict(frozen=True)

    cost: float
    log_reliability: float = Field(..., le=0)
    reputation: float
    objective: float
    penalty: NonNegative
    fitness: float
    shortfall: Tuple[NonNegative, ...]

    @property
    def feasible(self) -> bool:
        return not any(self.shortfall)
