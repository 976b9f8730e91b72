"""
Comparison coalition-formation methods sharing the optimizer's fitness:
nearest-first greedy, merge-and-split, and an NSGA-II style multi-objective GA.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import ConfigurationError
from .models import CoalitionAssignment, ObjectiveBreakdown, ObjectiveWeights, Scenario, TaskSpec
from .objectives import evaluate
from .scenario import ExecutionTimes, derive_assignment, travel_time

logger = logging.getLogger(__name__)

# bits -> ((P x 3) objective triples to minimize, P total shortfalls)
ObjectiveOracle = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]
Partition = Dict[int, List[Tuple[int, ...]]]


# ---------------------------------------------------------------------------
# Nearest-first greedy
# ---------------------------------------------------------------------------


def distance_based(
    scenario: Scenario,
    task: TaskSpec,
    leader_id: Optional[int],
    ledger: Mapping[int, float],
    exec_times: ExecutionTimes,
    candidates: Optional[Sequence[int]] = None,
    kept: Sequence[int] = (),
) -> CoalitionAssignment:
    """Add the nearest candidates (by travel time) until the requirement is met.

    Reputation and reliability play no part in the choice; `ledger` is accepted so
    every solver shares one call shape. Candidates default to every other UAV
    within the call radius of the leader. `kept` followers start in the coalition.
    """
    if candidates is None:
        origin = scenario.uav(leader_id).position if leader_id is not None else task.position
        candidates = [
            uav.id
            for uav in scenario.uavs
            if uav.id != leader_id and uav.id not in kept and math.dist(uav.position, origin) <= scenario.call_radius
        ]
    mu = np.asarray(scenario.resource_cost_coeff)
    required = np.asarray(task.required)

    members = ([] if leader_id is None else [leader_id]) + [uav_id for uav_id in kept if uav_id != leader_id]
    supply = np.zeros(scenario.n_resources)
    for uav_id in members:
        supply += mu * np.asarray(scenario.uav(uav_id).resources)

    ordered = sorted(candidates, key=lambda uav_id: (travel_time(scenario.uav(uav_id), task), uav_id))
    for uav_id in ordered:
        if np.all(supply >= required):
            break
        members.append(uav_id)
        supply += mu * np.asarray(scenario.uav(uav_id).resources)
    return derive_assignment(scenario, task, members, exec_times)


# ---------------------------------------------------------------------------
# Merge-and-split
# ---------------------------------------------------------------------------


class _CoalitionValues:
    """Memoized fitness of (task, member set) pairs"""

    def __init__(self, scenario, ledger, exec_times, weights, travel_once_per_member):
        self.scenario = scenario
        self.ledger = ledger
        self.exec_times = exec_times
        self.weights = weights
        self.travel_once_per_member = travel_once_per_member
        self._cache: Dict[Tuple[int, Tuple[int, ...]], ObjectiveBreakdown] = {}

    def breakdown(self, task: TaskSpec, members: Tuple[int, ...]) -> ObjectiveBreakdown:
        key = (task.id, members)
        if key not in self._cache:
            assign = derive_assignment(self.scenario, task, members, self.exec_times)
            self._cache[key] = evaluate(assign, task, self.ledger, self.weights, self.travel_once_per_member)
        return self._cache[key]

    def __call__(self, task: TaskSpec, members: Tuple[int, ...]) -> float:
        return self.breakdown(task, members).fitness


def _nearest_task(scenario: Scenario, tasks: Sequence[TaskSpec], uav_id: int) -> int:
    uav = scenario.uav(uav_id)
    return min(tasks, key=lambda task: (travel_time(uav, task), task.id)).id


def _split_halves(members: Tuple[int, ...]) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    half = len(members) // 2
    return members[:half], members[half:]


def merge_and_split_partition(
    scenario: Scenario,
    tasks: Sequence[TaskSpec],
    ledger: Mapping[int, float],
    exec_times: ExecutionTimes,
    weights: Optional[ObjectiveWeights] = None,
    initial: Optional[Mapping[int, Sequence[Sequence[int]]]] = None,
    available: Optional[Sequence[int]] = None,
    travel_once_per_member: bool = False,
) -> Partition:
    """Run merge and split passes until a full pass changes nothing.

    Without `initial`, every available UAV starts as a singleton on its nearest
    task. Two coalitions on the same task merge when the merged fitness exceeds
    the sum of the parts; a coalition splits into its id-ordered halves when the
    halves' fitness sum exceeds its own. Both moves strictly raise the total.
    """
    if not tasks:
        raise ConfigurationError("merge-and-split needs at least one task")
    tasks = sorted(tasks, key=lambda task: task.id)
    value = _CoalitionValues(scenario, ledger, exec_times, weights or scenario.weights, travel_once_per_member)

    partition: Partition = {task.id: [] for task in tasks}
    if initial is None:
        pool = sorted(available) if available is not None else sorted(uav.id for uav in scenario.uavs)
        for uav_id in pool:
            partition[_nearest_task(scenario, tasks, uav_id)].append((uav_id,))
    else:
        for task_id, coalitions in initial.items():
            partition[task_id] = [tuple(sorted(members)) for members in coalitions if members]

    passes = 0
    changed = True
    while changed:
        changed = False
        passes += 1
        for task in tasks:
            coalitions = sorted(partition[task.id])
            merged = True
            while merged:
                merged = False
                for i in range(len(coalitions)):
                    for j in range(i + 1, len(coalitions)):
                        a, b = coalitions[i], coalitions[j]
                        union = tuple(sorted(a + b))
                        if value(task, union) > value(task, a) + value(task, b):
                            coalitions = sorted([c for k, c in enumerate(coalitions) if k not in (i, j)] + [union])
                            merged = changed = True
                            break
                    if merged:
                        break

            result = []
            for members in coalitions:
                if len(members) > 1:
                    left, right = _split_halves(members)
                    if value(task, left) + value(task, right) > value(task, members):
                        result.extend([left, right])
                        changed = True
                        continue
                result.append(members)
            partition[task.id] = sorted(result)

    logger.debug("Merge-and-split settled after %d passes", passes)
    return partition


def merge_and_split(
    scenario: Scenario,
    tasks: Sequence[TaskSpec],
    ledger: Mapping[int, float],
    exec_times: ExecutionTimes,
    weights: Optional[ObjectiveWeights] = None,
    initial: Optional[Mapping[int, Sequence[Sequence[int]]]] = None,
    available: Optional[Sequence[int]] = None,
    travel_once_per_member: bool = False,
) -> List[CoalitionAssignment]:
    """Best coalition per task (in task-id order) after merge-and-split settles.

    Tasks left without any coalition get an empty assignment.
    """
    partition = merge_and_split_partition(
        scenario, tasks, ledger, exec_times, weights, initial, available, travel_once_per_member
    )
    value = _CoalitionValues(scenario, ledger, exec_times, weights or scenario.weights, travel_once_per_member)
    assignments = []
    for task in sorted(tasks, key=lambda task: task.id):
        coalitions = partition[task.id]
        best = max(coalitions, key=lambda members: (value(task, members), [-m for m in members]), default=())
        assignments.append(derive_assignment(scenario, task, best, exec_times))
    return assignments


# ---------------------------------------------------------------------------
# NSGA-II
# ---------------------------------------------------------------------------


class Nsga2Config(BaseModel):
    """Generational GA settings; distribution indexes are kept for the record only"""

    model_config = ConfigDict(frozen=True)

    population_size: int = Field(default=200, ge=2)
    max_iterations: int = Field(default=500, ge=1)
    mutation_prob: float = Field(default=0.10, ge=0, le=1)
    crossover_prob: float = Field(default=0.90, ge=0, le=1)
    rng_seed: int = Field(default=0, ge=0, lt=2**64)
    crossover_distribution_index: float = Field(default=20.0, ge=0)
    mutation_distribution_index: float = Field(default=100.0, ge=0)


@dataclass(frozen=True)
class ParetoFront:
    """Distinct bitmaps whose (C, -ln R, -P) triples are mutually non-dominated"""

    bits: Tuple[Tuple[int, ...], ...]
    points: Tuple[Tuple[float, float, float], ...]

    def __len__(self) -> int:
        return len(self.bits)

    def __iter__(self):
        return iter(zip(self.bits, self.points))


@dataclass
class Nsga2Result:
    front: ParetoFront
    best_bits: np.ndarray
    best_fitness: float
    history: List[float]
    evaluations: int
    final_population: np.ndarray
    final_points: np.ndarray
    best_breakdown: Optional[ObjectiveBreakdown] = None
    iterations: int = 0
    front_sizes: List[int] = field(default_factory=list)


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """All-<= with at least one strict <, minimizing every axis"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return bool(np.all(a <= b) and np.any(a < b))


def dominance_matrix(points: np.ndarray, violations: Optional[np.ndarray] = None) -> np.ndarray:
    """D[i, j] is True when point i dominates point j.

    With `violations`, feasible points dominate infeasible ones and infeasible
    points are ordered by total violation alone.
    """
    points = np.asarray(points, dtype=float).reshape(len(points), -1)
    le = np.all(points[:, None, :] <= points[None, :, :], axis=2)
    lt = np.any(points[:, None, :] < points[None, :, :], axis=2)
    pareto = le & lt
    if violations is None:
        return pareto
    v = np.asarray(violations, dtype=float)
    feasible = v <= 0
    both_feasible = feasible[:, None] & feasible[None, :]
    return np.where(
        both_feasible,
        pareto,
        (feasible[:, None] & ~feasible[None, :]) | (~feasible[:, None] & ~feasible[None, :] & (v[:, None] < v[None, :])),
    )


def fast_non_dominated_sort(points, violations: Optional[np.ndarray] = None) -> List[List[int]]:
    """Partition point indices into fronts F1, F2, ... (ascending indices within a front)"""
    points = np.asarray(points, dtype=float)
    n = len(points)
    if n == 0:
        return []
    points = points.reshape(n, -1)
    # identical rows share a rank, so only distinct rows are compared
    keys = points if violations is None else np.column_stack([points, np.asarray(violations, dtype=float)])
    unique, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    unique_violations = None if violations is None else unique[:, -1]
    dom = dominance_matrix(unique[:, : points.shape[1]], unique_violations)

    dominated_by = dom.sum(axis=0)
    level = np.full(len(unique), -1)
    current = dominated_by == 0
    depth = 0
    while np.any(current):
        level[current] = depth
        dominated_by = dominated_by - dom[current].sum(axis=0)
        dominated_by[level >= 0] = -1
        current = dominated_by == 0
        depth += 1

    ranks = level[inverse]
    return [np.flatnonzero(ranks == d).tolist() for d in range(depth)]


def crowding_distance(points) -> np.ndarray:
    """Crowding distance within one front; boundary points on any axis get inf"""
    points = np.asarray(points, dtype=float)
    n = len(points)
    distance = np.zeros(n)
    if n <= 2:
        distance[:] = np.inf
        return distance
    for axis in range(points.shape[1]):
        order = np.argsort(points[:, axis], kind="stable")
        values = points[order, axis]
        distance[order[0]] = distance[order[-1]] = np.inf
        span = values[-1] - values[0]
        if span <= 0:
            continue
        distance[order[1:-1]] += (values[2:] - values[:-2]) / span
    return distance


def pareto_front(bits: np.ndarray, points: np.ndarray, violations: Optional[np.ndarray] = None) -> ParetoFront:
    """Plain non-dominated, duplicate-free subset of the first constrained front"""
    bits = np.asarray(bits)
    points = np.asarray(points, dtype=float)
    first = fast_non_dominated_sort(points, violations)[0] if len(points) else []
    seen = set()
    unique = []
    for i in first:
        key = tuple(int(b) for b in bits[i])
        if key not in seen:
            seen.add(key)
            unique.append(i)
    keep = [i for i in unique if not any(dominates(points[j], points[i]) for j in unique if j != i)]
    return ParetoFront(
        bits=tuple(tuple(int(b) for b in bits[i]) for i in keep),
        points=tuple(tuple(float(x) for x in points[i]) for i in keep),
    )


def scalarize(points: np.ndarray, shortfall: np.ndarray, weights: ObjectiveWeights) -> np.ndarray:
    """Fitness from (C, -ln R, -P) and total shortfall"""
    points = np.asarray(points, dtype=float)
    objective = points[:, 0] + weights.eta1 * points[:, 1] + weights.eta2 * points[:, 2]
    return -(objective + weights.gamma * np.asarray(shortfall, dtype=float))


class Nsga2Optimizer:
    """Binary NSGA-II: tournament, uniform crossover, bit-flip, elitist survival"""

    def __init__(
        self,
        oracle: ObjectiveOracle,
        m: int,
        config: Optional[Nsga2Config] = None,
        weights: Optional[ObjectiveWeights] = None,
    ):
        if m < 1:
            raise ConfigurationError(f"Chromosome length must be at least 1 (got {m})")
        self.oracle = oracle
        self.m = m
        self.config = config or Nsga2Config()
        self.weights = weights or ObjectiveWeights()
        self.rng = np.random.default_rng(self.config.rng_seed)
        self.population: Optional[np.ndarray] = None
        self.points: Optional[np.ndarray] = None
        self.shortfall: Optional[np.ndarray] = None
        self.rank: Optional[np.ndarray] = None
        self.crowding: Optional[np.ndarray] = None
        self.history: List[float] = []
        self.evaluations = 0
        self.iteration = 0
        self.best_bits: Optional[np.ndarray] = None
        self.best_fitness = -np.inf

    def _evaluate(self, bits: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        points, shortfall = self.oracle(bits)
        self.evaluations += bits.shape[0]
        points = np.asarray(points, dtype=float).reshape(bits.shape[0], -1)
        shortfall = np.asarray(shortfall, dtype=float).reshape(bits.shape[0])
        fitness = scalarize(points, shortfall, self.weights)
        idx = int(np.argmax(fitness))
        if fitness[idx] > self.best_fitness:
            self.best_fitness = float(fitness[idx])
            self.best_bits = bits[idx].copy()
        return points, shortfall

    def _rank(self, points: np.ndarray, shortfall: np.ndarray) -> Tuple[np.ndarray, np.ndarray, List[List[int]]]:
        fronts = fast_non_dominated_sort(points, shortfall)
        rank = np.empty(len(points), dtype=int)
        crowding = np.empty(len(points))
        for level, front in enumerate(fronts):
            rank[front] = level
            crowding[front] = crowding_distance(points[front])
        return rank, crowding, fronts

    def initialize(self):
        size = self.config.population_size
        self.population = self.rng.integers(0, 2, size=(size, self.m), dtype=np.int8)
        self.points, self.shortfall = self._evaluate(self.population)
        self.rank, self.crowding, _ = self._rank(self.points, self.shortfall)
        self._record()

    def _tournament(self, count: int) -> np.ndarray:
        size = len(self.population)
        a = self.rng.integers(0, size, size=count)
        b = self.rng.integers(0, size, size=count)
        a_wins = (self.rank[a] < self.rank[b]) | ((self.rank[a] == self.rank[b]) & (self.crowding[a] >= self.crowding[b]))
        return np.where(a_wins, a, b)

    def _offspring(self) -> np.ndarray:
        size = self.config.population_size
        n_pairs = (size + 1) // 2
        parents = self.population[self._tournament(2 * n_pairs)]
        first, second = parents[0::2].copy(), parents[1::2].copy()

        cross = self.rng.random(n_pairs) < self.config.crossover_prob
        swap = (self.rng.random((n_pairs, self.m)) < 0.5) & cross[:, None]
        first[swap], second[swap] = second[swap], first[swap]

        children = np.concatenate([first, second])[:size]
        flips = self.rng.random(children.shape) < self.config.mutation_prob / self.m
        children[flips] ^= 1
        return children

    def step(self):
        if self.population is None:
            self.initialize()
        self.iteration += 1
        children = self._offspring()
        child_points, child_shortfall = self._evaluate(children)

        merged = np.concatenate([self.population, children])
        points = np.concatenate([self.points, child_points])
        shortfall = np.concatenate([self.shortfall, child_shortfall])
        rank, crowding, fronts = self._rank(points, shortfall)

        survivors: List[int] = []
        size = self.config.population_size
        for front in fronts:
            if len(survivors) + len(front) <= size:
                survivors.extend(front)
                continue
            order = sorted(front, key=lambda i: (-crowding[i], i))
            survivors.extend(order[: size - len(survivors)])
            break

        survivors = np.asarray(survivors)
        self.population = merged[survivors]
        self.points = points[survivors]
        self.shortfall = shortfall[survivors]
        self.rank, self.crowding, _ = self._rank(self.points, self.shortfall)
        self._record()
        if self.iteration % 100 == 0:
            logger.debug("NSGA-II iteration %d: best scalarized %.6f", self.iteration, self.history[-1])

    def _record(self):
        self.history.append(self.best_fitness)

    def front(self) -> ParetoFront:
        return pareto_front(self.population, self.points, self.shortfall)

    def best(self) -> Tuple[np.ndarray, float]:
        """Highest scalarized fitness among every bitmap evaluated so far.

        Infeasible bitmaps that constrained survival drops stay in the archive.
        """
        if self.best_bits is None:
            raise ConfigurationError("NSGA-II has not evaluated any population yet")
        return self.best_bits.copy(), self.best_fitness

    def run(self, breakdown: Optional[Callable[[np.ndarray], ObjectiveBreakdown]] = None) -> Nsga2Result:
        self.initialize()
        front_sizes = []
        for _ in range(self.config.max_iterations):
            self.step()
            front_sizes.append(int(np.sum(self.rank == 0)))
        best_bits, best_fitness = self.best()
        return Nsga2Result(
            front=self.front(),
            best_bits=best_bits,
            best_fitness=best_fitness,
            history=list(self.history),
            evaluations=self.evaluations,
            final_population=self.population.copy(),
            final_points=self.points.copy(),
            best_breakdown=breakdown(best_bits) if breakdown is not None else None,
            iterations=self.iteration,
            front_sizes=front_sizes,
        )


def nsga2_run(
    oracle: ObjectiveOracle,
    m: int,
    config: Optional[Nsga2Config] = None,
    weights: Optional[ObjectiveWeights] = None,
    breakdown: Optional[Callable[[np.ndarray], ObjectiveBreakdown]] = None,
) -> Nsga2Result:
    """Pareto front plus the best scalarized bitmap ever evaluated"""
    return Nsga2Optimizer(oracle, m, config, weights).run(breakdown)
