"""
Scenario generation, serialization and coalition matrix assembly
"""

import logging
import math
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from .config import validate_generation_params
from .errors import ConfigurationError
from .models import CoalitionAssignment, GenerationParams, Scenario, TaskSpec, Uav

logger = logging.getLogger(__name__)

FAILURE_RATE_RANGE = (5e-5, 1e-4)
EXECUTION_TIME_RANGE = (10.0, 20.0)


def travel_time(uav: Uav, task: TaskSpec) -> float:
    """Euclidean distance to the task divided by the UAV speed"""
    dx = uav.position[0] - task.position[0]
    dy = uav.position[1] - task.position[1]
    return math.hypot(dx, dy) / uav.speed


class ExecutionTimes:
    """Seeded, cached execution times k_ij.

    Each (task, UAV) pair draws its row from its own generator seeded with
    (seed, task_id, uav_id), so a value never depends on the order in which
    pairs are first requested.
    """

    def __init__(self, seed: int, low: float = EXECUTION_TIME_RANGE[0], high: float = EXECUTION_TIME_RANGE[1]):
        self.seed = int(seed)
        self.low = low
        self.high = high
        self._rows: Dict[Tuple[int, int], np.ndarray] = {}

    def row(self, task_id: int, uav_id: int, n_resources: int) -> np.ndarray:
        key = (task_id, uav_id)
        cached = self._rows.get(key)
        if cached is None or cached.shape[0] != n_resources:
            rng = np.random.default_rng([self.seed, task_id, uav_id])
            cached = rng.uniform(self.low, self.high, size=n_resources)
            cached.flags.writeable = False
            self._rows[key] = cached
        return cached


def derive_assignment(
    scenario: Scenario,
    task: TaskSpec,
    members: Iterable[int],
    exec_times: ExecutionTimes,
) -> CoalitionAssignment:
    """Assemble e, k, a (and lambda) for a coalition of `members` on `task`"""
    member_ids = tuple(sorted(set(members)))
    mu = np.asarray(scenario.resource_cost_coeff)
    exec_cost, exec_time, travel, failure_rates = [], [], [], []
    for uav_id in member_ids:
        uav = scenario.uav(uav_id)
        exec_cost.append(tuple(float(x) for x in mu * np.asarray(uav.resources)))
        exec_time.append(tuple(float(x) for x in exec_times.row(task.id, uav_id, scenario.n_resources)))
        travel.append(travel_time(uav, task))
        failure_rates.append(uav.failure_rates)
    return CoalitionAssignment(
        task_id=task.id,
        member_ids=member_ids,
        n_resources=scenario.n_resources,
        exec_cost=tuple(exec_cost),
        exec_time=tuple(exec_time),
        travel_time=tuple(travel),
        failure_rates=tuple(failure_rates),
    )


def inject_failure_rate(uav: Uav, probability: float, mean_exec_time: float = 15.0) -> Uav:
    """Rewrite a UAV's failure rates so its mission failure probability is `probability`.

    The lambda row is set uniformly such that 1 - exp(-sum_j lambda_j * k) equals
    the injected probability at the mean execution time, and the probability itself
    is kept as an override for failure sampling.
    """
    if not 0 <= probability < 1:
        raise ConfigurationError(f"Injected failure probability must be in [0, 1) (got {probability})")
    n_resources = len(uav.resources)
    rate = -math.log1p(-probability) / (n_resources * mean_exec_time)
    return uav.model_copy(update={"failure_rates": (rate,) * n_resources, "failure_override": probability})


def _coerce_params(params: Union[GenerationParams, Mapping]) -> GenerationParams:
    if isinstance(params, GenerationParams):
        return params
    errors = validate_generation_params(dict(params))
    if errors:
        raise ConfigurationError("; ".join(errors))
    try:
        return GenerationParams(**params)
    except ValidationError as e:
        raise ConfigurationError(str(e)) from e


def _draw_positions(rng: np.random.Generator, count: int, side: float) -> List[Tuple[float, float]]:
    points = rng.uniform(0.0, side, size=(count, 2))
    return [(float(x), float(y)) for x, y in points]


def _draw_sparse(rng: np.random.Generator, bounds: Tuple[float, float], probability: float, size: int) -> np.ndarray:
    """Uniform amounts, each kept with `probability` and zeroed otherwise"""
    amounts = rng.uniform(*bounds, size=size)
    kept = rng.random(size) < probability
    return np.where(kept, amounts, 0.0)


def _draw_payload(params: GenerationParams, rng: np.random.Generator, uav_id: int) -> Tuple[np.ndarray, np.ndarray]:
    resources = _draw_sparse(rng, params.resource_range, params.carry_probability, params.n_resources)
    if not np.any(resources > 0):
        resources[uav_id % params.n_resources] = params.resource_range[1]
    rates = rng.uniform(*FAILURE_RATE_RANGE, size=params.n_resources)
    return resources, rates


def _equip(params: GenerationParams, uav: Uav, rng: np.random.Generator) -> Uav:
    """Fresh capacities and failure rates; selfishness and injected failures stay"""
    resources, rates = _draw_payload(params, rng, uav.id)
    uav = uav.model_copy(
        update={
            "resources": tuple(float(x) for x in resources),
            "failure_rates": tuple(float(x) for x in rates),
            "failure_override": None,
        }
    )
    if uav.id in params.failure_overrides:
        uav = inject_failure_rate(uav, params.failure_overrides[uav.id])
    return uav


def generate_fleet(params: GenerationParams, rng: np.random.Generator) -> List[Uav]:
    """Draw UAV capacities, failure rates and positions"""
    positions = _draw_positions(rng, params.n_uavs, params.region_side)
    fleet = []
    for uav_id, position in enumerate(positions):
        resources, rates = _draw_payload(params, rng, uav_id)
        selfish = uav_id in params.selfish_ids
        uav = Uav(
            id=uav_id,
            position=position,
            resources=tuple(float(x) for x in resources),
            failure_rates=tuple(float(x) for x in rates),
            speed=params.speed,
            selfish=selfish,
            contribution_fraction=params.contribution_fraction if selfish else 1.0,
        )
        if uav_id in params.failure_overrides:
            uav = inject_failure_rate(uav, params.failure_overrides[uav_id])
        fleet.append(uav)
    return fleet


def generate_tasks(params: GenerationParams, rng: np.random.Generator) -> List[TaskSpec]:
    """Draw task positions and requirement vectors"""
    positions = _draw_positions(rng, params.n_tasks, params.region_side)
    tasks = []
    for task_id, position in enumerate(positions):
        required = _draw_sparse(rng, params.requirement_range, params.need_probability, params.n_resources)
        if not np.any(required > 0):
            required[task_id % params.n_resources] = params.requirement_range[1]
        tasks.append(TaskSpec(id=task_id, position=position, required=tuple(float(x) for x in required)))
    return tasks


def _scenario_from_parts(params: GenerationParams, uavs: List[Uav], tasks: List[TaskSpec], seed: int) -> Scenario:
    mu = params.mu if params.mu is not None else (1.0,) * params.n_resources
    call_radius = params.call_radius
    if call_radius is None:
        call_radius = params.region_side * math.sqrt(2.0)
    return Scenario(
        uavs=uavs,
        tasks=tasks,
        mu=mu,
        weights=params.weights,
        call_radius=call_radius,
        seed=seed,
    )


def generate_scenario(params: Union[GenerationParams, Mapping], seed: int) -> Scenario:
    """Uniformly place UAVs and tasks in the square region; deterministic in `seed`"""
    params = _coerce_params(params)
    rng = np.random.default_rng(seed)
    uavs = generate_fleet(params, rng)
    tasks = generate_tasks(params, rng)
    logger.debug("Generated scenario with %d UAVs and %d tasks (seed %d)", len(uavs), len(tasks), seed)
    return _scenario_from_parts(params, uavs, tasks, seed)


def derive_seed(*keys: int) -> int:
    """Stable 64-bit seed from a sequence of non-negative integers"""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, dtype=np.uint64)[0])


class ScenarioStream:
    """Per-mission scenarios for one fleet of UAV identities.

    Ids, selfishness and injected failure probabilities stay with the fleet.
    Every mission redraws positions, tasks and the payload each UAV carries
    (capacities and base failure rates). Passing `fleet` keeps its payloads
    instead, which is how a depleting campaign carries leftovers forward.
    """

    def __init__(self, params: Union[GenerationParams, Mapping], seed: int):
        self.params = _coerce_params(params)
        self.seed = int(seed)
        self.fleet = generate_fleet(self.params, np.random.default_rng([self.seed, 0]))

    def scenario(self, mission: int, fleet: Optional[List[Uav]] = None) -> Scenario:
        rng = np.random.default_rng([self.seed, mission + 1])
        positions = _draw_positions(rng, len(self.fleet), self.params.region_side)
        tasks = generate_tasks(self.params, rng)
        if fleet is None:
            payload_rng = np.random.default_rng([self.seed, mission + 1, 1])
            base = [_equip(self.params, uav, payload_rng) for uav in self.fleet]
        else:
            base = fleet
        uavs = [uav.model_copy(update={"position": position}) for uav, position in zip(base, positions)]
        return _scenario_from_parts(self.params, uavs, tasks, derive_seed(self.seed, mission + 1))

    def __iter__(self) -> Iterator[Scenario]:
        mission = 0
        while True:
            yield self.scenario(mission)
            mission += 1


class FixedScenarioStream:
    """Replays one loaded scenario for every mission"""

    def __init__(self, scenario: Scenario):
        self.base = scenario
        self.fleet = list(scenario.uavs)

    def scenario(self, mission: int, fleet: Optional[List[Uav]] = None) -> Scenario:
        if fleet is None:
            return self.base
        return self.base.model_copy(update={"uavs": list(fleet)})


def save_scenario(scenario: Scenario, path: Union[str, Path]) -> Path:
    """Write the scenario JSON document"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(scenario.model_dump_json(by_alias=True, indent=2) + "\n", encoding="utf-8")
    return path


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Read a scenario JSON document"""
    return Scenario.model_validate_json(Path(path).read_text(encoding="utf-8"))
