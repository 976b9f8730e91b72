"""
Leader-follower mission engine.

One mission: the nearest UAV to each task becomes its leader, every leader
optimizes a coalition over the UAVs it can call, followers invited by several
leaders join the one offering the highest utility, leaders that lost a follower
re-plan around the followers they kept, and finally the coalitions execute.
Selfish members under-deliver, failures are sampled and reputation is credited.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .baselines import Nsga2Config, distance_based, merge_and_split, nsga2_run
from .errors import ConfigurationError
from .models import CoalitionAssignment, ObjectiveBreakdown, Scenario, TaskSpec, Uav
from .objectives import CoalitionProblem, evaluate
from .qiga import QigaConfig, run as qiga_run
from .reputation import ReputationLedger, ReputationMode
from .scenario import ExecutionTimes, FixedScenarioStream, ScenarioStream, derive_assignment, derive_seed, travel_time

logger = logging.getLogger(__name__)

SolverName = Literal["moqga", "nsga2", "distance", "merge-split"]
SOLVERS: Tuple[str, ...] = ("moqga", "nsga2", "distance", "merge-split")

# stream keys for derive_seed; keep solver and settlement draws apart
_SOLVER_STREAM = 1
_SETTLE_STREAM = 2


class Bid(BaseModel):
    """A leader's request to one candidate, valued by the candidate"""

    model_config = ConfigDict(frozen=True)

    leader_id: Optional[int]
    task_id: int
    uav_id: int
    utility: float = Field(..., description="rho - delta * travel time")
    pledged: Tuple[float, ...]


class TaskOutcome(BaseModel):
    """What happened to one task in one mission"""

    model_config = ConfigDict(frozen=True)

    task_id: int
    leader_id: Optional[int] = None
    follower_ids: Tuple[int, ...] = ()
    satisfied: bool
    shortfall: Tuple[float, ...]
    shortfall_total: float = Field(..., ge=0)
    violations: int = Field(..., ge=0, description="Resources with unmet requirement")
    breakdown: Optional[ObjectiveBreakdown] = Field(default=None, description="Planned coalition evaluation")
    failed_ids: Tuple[int, ...] = ()
    delivered: Dict[int, Tuple[float, ...]] = Field(default_factory=dict)
    reputation_delta: Dict[int, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_satisfied(self) -> "TaskOutcome":
        if self.satisfied != (self.shortfall_total == 0):
            raise ValueError("a task is satisfied exactly when nothing is short")
        return self

    @property
    def member_ids(self) -> Tuple[int, ...]:
        leader = () if self.leader_id is None else (self.leader_id,)
        return tuple(sorted(leader + self.follower_ids))


class MissionReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    mission: int = Field(..., ge=0)
    solver: str
    outcomes: List[TaskOutcome]
    reputation: Dict[int, float] = Field(default_factory=dict, description="Ledger after the mission")

    @model_validator(mode="after")
    def check_disjoint(self) -> "MissionReport":
        seen = set()
        for outcome in self.outcomes:
            members = set(outcome.member_ids)
            if members & seen:
                raise ValueError(f"UAVs {sorted(members & seen)} belong to more than one coalition")
            seen |= members
        return self

    @property
    def completed_fraction(self) -> float:
        if not self.outcomes:
            return 0.0
        return sum(outcome.satisfied for outcome in self.outcomes) / len(self.outcomes)

    @property
    def violations(self) -> int:
        return sum(outcome.violations for outcome in self.outcomes)

    @property
    def shortfall_total(self) -> float:
        return float(sum(outcome.shortfall_total for outcome in self.outcomes))


class CampaignConfig(BaseModel):
    """Everything a campaign needs besides its scenario stream"""

    model_config = ConfigDict(frozen=True)

    solver: SolverName = "moqga"
    missions: int = Field(default=30, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    reputation_mode: ReputationMode = "additive"
    decay_kappa: float = Field(default=0.95, ge=0, le=1)
    initial_reputation: float = 0.0
    deplete_resources: bool = False
    travel_once_per_member: bool = False
    qiga: QigaConfig = Field(default_factory=QigaConfig)
    nsga2: Nsga2Config = Field(default_factory=Nsga2Config)


@dataclass(frozen=True)
class ScatterPoint:
    """One evaluated solution: cost against -ln R"""

    mission: int
    task_id: int
    solver: str
    cost: float
    neg_log_reliability: float


@dataclass
class CampaignResult:
    config: CampaignConfig
    reports: List[MissionReport]
    ledger: ReputationLedger
    scatter: List[ScatterPoint] = field(default_factory=list)

    @property
    def completed_pct(self) -> float:
        total = sum(len(report.outcomes) for report in self.reports)
        done = sum(outcome.satisfied for report in self.reports for outcome in report.outcomes)
        return 100.0 * done / total if total else 0.0

    @property
    def mean_violations(self) -> float:
        return float(np.mean([report.violations for report in self.reports])) if self.reports else 0.0

    @property
    def mean_shortfall(self) -> float:
        return float(np.mean([report.shortfall_total for report in self.reports])) if self.reports else 0.0

    def aggregates(self) -> Dict[str, float]:
        return {
            "completed_pct": self.completed_pct,
            "mean_violations": self.mean_violations,
            "mean_shortfall": self.mean_shortfall,
        }


# ---------------------------------------------------------------------------
# Detection and candidate calls
# ---------------------------------------------------------------------------


def detect_and_elect(scenario: Scenario) -> List[Tuple[TaskSpec, Optional[int]]]:
    """Pair every task with the nearest UAV not already leading another task.

    Pairs are claimed in ascending distance (UAV id, then task id on ties), so a
    UAV nearest to two tasks leads the closer one and the other task falls to its
    next-nearest UAV. Tasks left over when UAVs run out are returned unled.
    """
    pairs = sorted(
        (math.dist(uav.position, task.position), uav.id, task.id) for task in scenario.tasks for uav in scenario.uavs
    )
    leaders: Dict[int, int] = {}
    busy = set()
    for _, uav_id, task_id in pairs:
        if task_id in leaders or uav_id in busy:
            continue
        leaders[task_id] = uav_id
        busy.add(uav_id)
    return [(task, leaders.get(task.id)) for task in sorted(scenario.tasks, key=lambda task: task.id)]


def candidate_pool(
    scenario: Scenario,
    task: TaskSpec,
    leader_id: int,
    committed: Iterable[int] = (),
    require_overlap: bool = True,
) -> List[int]:
    """Uncommitted UAVs within the call radius of the leader.

    With `require_overlap` only UAVs holding some resource the task needs respond.
    """
    blocked = set(committed) | {leader_id}
    origin = scenario.uav(leader_id).position
    needed = np.asarray(task.required) > 0
    pool = []
    for uav in scenario.uavs:
        if uav.id in blocked or math.dist(uav.position, origin) > scenario.call_radius:
            continue
        if require_overlap and not np.any((np.asarray(uav.resources) > 0) & needed):
            continue
        pool.append(uav.id)
    return sorted(pool)


def _population_scatter(problem: CoalitionProblem, population: np.ndarray) -> List[Tuple[float, float]]:
    points, _ = problem.objectives(population)
    return [(float(c), float(r)) for c, r in points[:, :2]]


def form_coalition(
    task: TaskSpec,
    leader_id: int,
    scenario: Scenario,
    ledger: Mapping[int, float],
    solver: SolverName,
    exec_times: ExecutionTimes,
    seed: int,
    config: Optional[CampaignConfig] = None,
    committed: Iterable[int] = (),
    scatter: Optional[List[Tuple[float, float]]] = None,
    kept: Sequence[int] = (),
) -> CoalitionAssignment:
    """Leader plus the followers chosen by `solver` among its callable UAVs.

    `kept` followers, already won in an earlier bidding round, stay in the
    coalition and the solver only adds to them. An empty call list leaves the
    leader with its kept followers. When `scatter` is given the (cost, -ln R)
    of the solver's final population is appended to it.
    """
    config = config or CampaignConfig(solver=solver)
    committed = set(committed) | set(kept)
    if solver == "distance":
        candidates = candidate_pool(scenario, task, leader_id, committed, require_overlap=False)
        assign = distance_based(scenario, task, leader_id, ledger, exec_times, candidates, kept)
        if scatter is not None:
            b = evaluate(assign, task, ledger, scenario.weights, config.travel_once_per_member)
            scatter.append((b.cost, -b.log_reliability))
        return assign
    if solver not in ("moqga", "nsga2"):
        raise ConfigurationError(f"Solver {solver!r} does not form coalitions leader by leader")

    candidates = candidate_pool(scenario, task, leader_id, committed)
    if not candidates:
        return derive_assignment(scenario, task, [leader_id, *kept], exec_times)
    problem = CoalitionProblem(
        scenario,
        task,
        leader_id,
        candidates,
        ledger,
        exec_times,
        travel_once_per_member=config.travel_once_per_member,
        committed=kept,
    )
    if solver == "moqga":
        result = qiga_run(problem, problem.m, config.qiga.model_copy(update={"rng_seed": seed}))
    else:
        result = nsga2_run(
            problem.objectives,
            problem.m,
            config.nsga2.model_copy(update={"rng_seed": seed}),
            problem.weights,
        )
    if scatter is not None:
        scatter.extend(_population_scatter(problem, result.final_population))
    logger.debug(
        "Task %d: %s chose %s (fitness %.3f)", task.id, solver, problem.members(result.best_bits), result.best_fitness
    )
    return problem.assignment(result.best_bits)


# ---------------------------------------------------------------------------
# Bidding
# ---------------------------------------------------------------------------


def follower_utility(uav: Uav, task: TaskSpec, rho: float, delta: float) -> float:
    """U = rho - delta * a"""
    return rho - delta * travel_time(uav, task)


def make_bids(
    proposals: Mapping[int, CoalitionAssignment],
    leaders: Mapping[int, int],
    scenario: Scenario,
    ledger: Mapping[int, float],
    committed: Iterable[int] = (),
) -> List[Bid]:
    """One bid per (task, invited follower); `committed` UAVs are not invited again"""
    committed = set(committed)
    bids = []
    for task_id in sorted(proposals):
        task = scenario.task(task_id)
        for uav_id in proposals[task_id].member_ids:
            if uav_id == leaders.get(task_id) or uav_id in committed:
                continue
            uav = scenario.uav(uav_id)
            bids.append(
                Bid(
                    leader_id=leaders.get(task_id),
                    task_id=task_id,
                    uav_id=uav_id,
                    utility=follower_utility(uav, task, ledger[uav_id], scenario.weights.delta),
                    pledged=uav.resources,
                )
            )
    return bids


def resolve_bids(bids: Sequence[Bid]) -> Dict[int, int]:
    """UAV id -> task id of its highest-utility bid; ties go to the lower task id"""
    best: Dict[int, Bid] = {}
    for bid in bids:
        current = best.get(bid.uav_id)
        if current is None or (bid.utility, -bid.task_id) > (current.utility, -current.task_id):
            best[bid.uav_id] = bid
    return {uav_id: bid.task_id for uav_id, bid in best.items()}


# ---------------------------------------------------------------------------
# Settlement
# ---------------------------------------------------------------------------


def failure_probability(uav: Uav, exec_time: Sequence[float]) -> float:
    """Injected override, else 1 - exp(-sum_j lambda_j * k_j)"""
    if uav.failure_override is not None:
        return uav.failure_override
    return -math.expm1(-float(np.dot(uav.failure_rates, exec_time)))


def contribution_shares(delivered: Mapping[int, np.ndarray], required: Sequence[float]) -> Dict[int, float]:
    """f_i = sum over required resources of delivered_j / tau_j"""
    required = np.asarray(required, dtype=float)
    mask = required > 0
    return {uav_id: float(np.sum(amount[mask] / required[mask])) for uav_id, amount in delivered.items()}


def reputation_deltas(shares: Mapping[int, float], total_requirement: float) -> Dict[int, float]:
    """Split the task's total requirement in proportion to the shares"""
    total = sum(shares.values())
    if total <= 0:
        return {uav_id: 0.0 for uav_id in shares}
    return {uav_id: total_requirement * share / total for uav_id, share in shares.items()}


def _unled_outcome(task: TaskSpec) -> TaskOutcome:
    required = tuple(float(x) for x in task.required)
    return TaskOutcome(
        task_id=task.id,
        satisfied=False,
        shortfall=required,
        shortfall_total=float(sum(required)),
        violations=sum(1 for x in required if x > 0),
    )


def settle_mission(
    coalitions: Mapping[int, CoalitionAssignment],
    scenario: Scenario,
    ledger: ReputationLedger,
    rng: np.random.Generator,
    mission: int = 0,
    leaders: Optional[Mapping[int, Optional[int]]] = None,
    solver: str = "moqga",
    travel_once_per_member: bool = False,
) -> MissionReport:
    """Execute the committed coalitions, credit reputation and build the report.

    Tasks of the scenario absent from `coalitions` are reported unled.
    """
    leaders = dict(leaders or {})
    snapshot = ledger.snapshot()
    mu = np.asarray(scenario.resource_cost_coeff)
    outcomes = []
    deltas: Dict[int, float] = {}

    for task in sorted(scenario.tasks, key=lambda task: task.id):
        assign = coalitions.get(task.id)
        if assign is None or assign.is_empty:
            outcomes.append(_unled_outcome(task))
            continue
        planned = evaluate(assign, task, snapshot, scenario.weights, travel_once_per_member)

        delivered: Dict[int, np.ndarray] = {}
        failed = []
        for row, uav_id in enumerate(assign.member_ids):
            uav = scenario.uav(uav_id)
            amount = np.asarray(uav.resources) * uav.contribution_fraction
            if rng.random() < failure_probability(uav, assign.exec_time[row]):
                failed.append(uav_id)
                amount = np.zeros_like(amount)
            delivered[uav_id] = amount

        supplied = mu * np.sum(list(delivered.values()), axis=0)
        shortfall = np.maximum(0.0, np.asarray(task.required) - supplied)
        task_deltas = reputation_deltas(contribution_shares(delivered, task.required), task.total_requirement)
        deltas.update(task_deltas)

        leader_id = leaders.get(task.id)
        outcomes.append(
            TaskOutcome(
                task_id=task.id,
                leader_id=leader_id,
                follower_ids=tuple(uav_id for uav_id in assign.member_ids if uav_id != leader_id),
                satisfied=bool(not np.any(shortfall > 0)),
                shortfall=tuple(float(x) for x in shortfall),
                shortfall_total=float(shortfall.sum()),
                violations=int(np.count_nonzero(shortfall > 0)),
                breakdown=planned,
                failed_ids=tuple(failed),
                delivered={uav_id: tuple(float(x) for x in amount) for uav_id, amount in delivered.items()},
                reputation_delta=task_deltas,
            )
        )

    ledger.apply(mission, deltas)
    report = MissionReport(mission=mission, solver=solver, outcomes=outcomes, reputation=ledger.snapshot())
    logger.info(
        "Mission %d (%s): %d/%d tasks satisfied, %d violations",
        mission,
        solver,
        sum(outcome.satisfied for outcome in outcomes),
        len(outcomes),
        report.violations,
    )
    return report


# ---------------------------------------------------------------------------
# Mission and campaign drivers
# ---------------------------------------------------------------------------


def _nearest_member(scenario: Scenario, task: TaskSpec, members: Sequence[int]) -> Optional[int]:
    if not members:
        return None
    return min(members, key=lambda uav_id: (travel_time(scenario.uav(uav_id), task), uav_id))


def _plan_merge_split(scenario, ledger, exec_times, config):
    snapshot = ledger.snapshot()
    assignments = merge_and_split(
        scenario,
        scenario.tasks,
        snapshot,
        exec_times,
        travel_once_per_member=config.travel_once_per_member,
    )
    coalitions = {assign.task_id: assign for assign in assignments if not assign.is_empty}
    leaders = {
        task_id: _nearest_member(scenario, scenario.task(task_id), assign.member_ids)
        for task_id, assign in coalitions.items()
    }
    return coalitions, leaders


def repair_rounds(solver: str, n_leaders: int) -> int:
    """Bidding rounds allowed in one mission.

    The optimizers re-plan once per elected leader at most. The greedy baseline
    proposes once and keeps whichever followers it wins.
    """
    if solver == "distance":
        return 1
    return max(1, n_leaders)


def _plan_leader_follower(scenario, ledger, exec_times, config, mission, scatter_sink):
    """Propose, bid and repair until every led task has an uncontested coalition.

    Followers a leader wins are committed at once; a leader that lost some of
    its invitations re-plans around the ones it kept.
    """
    snapshot = ledger.snapshot()
    elected = [(task, leader) for task, leader in detect_and_elect(scenario) if leader is not None]
    leaders = {task.id: leader for task, leader in elected}
    committed = set(leaders.values())
    kept: Dict[int, List[int]] = {task.id: [] for task, _ in elected}
    final: Dict[int, CoalitionAssignment] = {}
    pending = [task for task, _ in elected]
    max_rounds = repair_rounds(config.solver, len(elected))

    for round_index in range(max_rounds):
        if not pending:
            break
        last_round = round_index == max_rounds - 1
        proposals = {}
        for task in pending:
            points: List[Tuple[float, float]] = []
            proposals[task.id] = form_coalition(
                task,
                leaders[task.id],
                scenario,
                snapshot,
                config.solver,
                exec_times,
                derive_seed(config.seed, _SOLVER_STREAM, mission, task.id, round_index),
                config,
                committed,
                points if scatter_sink is not None else None,
                kept[task.id],
            )
            if scatter_sink is not None:
                scatter_sink[task.id] = points
        winners = resolve_bids(make_bids(proposals, leaders, scenario, snapshot, committed))
        committed_before = set(committed)

        still_pending = []
        for task in pending:
            invited = [uav_id for uav_id in proposals[task.id].member_ids if uav_id not in committed_before]
            won = [uav_id for uav_id in invited if winners.get(uav_id) == task.id]
            kept[task.id].extend(won)
            committed.update(won)
            if len(won) == len(invited) or last_round:
                final[task.id] = derive_assignment(scenario, task, [leaders[task.id], *kept[task.id]], exec_times)
            else:
                still_pending.append(task)
        if still_pending:
            logger.debug("Mission %d round %d: %d leaders re-plan", mission, round_index, len(still_pending))
        pending = still_pending
    return final, leaders


def run_mission(
    scenario: Scenario,
    ledger: ReputationLedger,
    config: CampaignConfig,
    mission: int = 0,
    scatter: Optional[List[ScatterPoint]] = None,
) -> MissionReport:
    """Plan, commit and settle one mission with the configured solver"""
    exec_times = ExecutionTimes(scenario.rng_seed)
    scatter_sink: Optional[Dict[int, List[Tuple[float, float]]]] = {} if scatter is not None else None
    if config.solver == "merge-split":
        coalitions, leaders = _plan_merge_split(scenario, ledger, exec_times, config)
        if scatter_sink is not None:
            snapshot = ledger.snapshot()
            for task_id, assign in coalitions.items():
                b = evaluate(assign, scenario.task(task_id), snapshot, scenario.weights, config.travel_once_per_member)
                scatter_sink[task_id] = [(b.cost, -b.log_reliability)]
    else:
        coalitions, leaders = _plan_leader_follower(scenario, ledger, exec_times, config, mission, scatter_sink)

    if scatter is not None:
        for task_id in sorted(scatter_sink):
            scatter.extend(ScatterPoint(mission, task_id, config.solver, c, r) for c, r in scatter_sink[task_id])

    rng = np.random.default_rng(derive_seed(config.seed, _SETTLE_STREAM, mission))
    return settle_mission(
        coalitions, scenario, ledger, rng, mission, leaders, config.solver, config.travel_once_per_member
    )


def _deplete(fleet: List[Uav], report: MissionReport) -> List[Uav]:
    used: Dict[int, np.ndarray] = {}
    for outcome in report.outcomes:
        for uav_id, amount in outcome.delivered.items():
            used[uav_id] = np.asarray(amount)
    depleted = []
    for uav in fleet:
        if uav.id in used:
            left = np.maximum(0.0, np.asarray(uav.resources) - used[uav.id])
            uav = uav.model_copy(update={"resources": tuple(float(x) for x in left)})
        depleted.append(uav)
    return depleted


def run_campaign(
    stream: Union[ScenarioStream, FixedScenarioStream],
    config: CampaignConfig,
    collect_scatter: bool = True,
    on_report: Optional[Callable[[MissionReport], None]] = None,
) -> CampaignResult:
    """Run `config.missions` missions against one persistent ledger.

    A depleting campaign feeds each mission the leftovers of the previous one;
    otherwise the stream equips the fleet afresh every mission.

    `on_report` sees every mission report as soon as it is settled.
    """
    fleet = list(stream.fleet)
    ledger = ReputationLedger(
        (uav.id for uav in fleet),
        initial=config.initial_reputation,
        mode=config.reputation_mode,
        kappa=config.decay_kappa,
    )
    scatter: Optional[List[ScatterPoint]] = [] if collect_scatter else None
    reports = []
    for mission in range(config.missions):
        scenario = stream.scenario(mission, fleet if config.deplete_resources else None)
        report = run_mission(scenario, ledger, config, mission + 1, scatter)
        reports.append(report)
        if on_report is not None:
            on_report(report)
        if config.deplete_resources:
            fleet = _deplete(fleet, report)

    result = CampaignResult(config=config, reports=reports, ledger=ledger, scatter=scatter or [])
    logger.info(
        "Campaign %s: %.1f%% tasks completed, %.2f mean violations over %d missions",
        config.solver,
        result.completed_pct,
        result.mean_violations,
        config.missions,
    )
    return result


# ---------------------------------------------------------------------------
# Campaign statistics
# ---------------------------------------------------------------------------


def selection_frequency(
    reports: Sequence[MissionReport],
    uav_ids: Optional[Iterable[int]] = None,
    window: Optional[Tuple[int, int]] = None,
) -> Dict[int, float]:
    """Fraction of missions (inclusive `window` of mission numbers) in which a UAV was a follower"""
    selected = [r for r in reports if window is None or window[0] <= r.mission <= window[1]]
    if uav_ids is None:
        uav_ids = sorted({uav_id for r in reports for uav_id in r.reputation})
    counts = {uav_id: 0 for uav_id in uav_ids}
    for report in selected:
        followers = {uav_id for outcome in report.outcomes for uav_id in outcome.follower_ids}
        for uav_id in counts:
            counts[uav_id] += uav_id in followers
    return {uav_id: count / len(selected) if selected else 0.0 for uav_id, count in counts.items()}


def follower_share(reports: Sequence[MissionReport], uav_ids: Iterable[int]) -> float:
    """Fraction of all follower slots held by `uav_ids`"""
    uav_ids = set(uav_ids)
    slots = [uav_id for r in reports for outcome in r.outcomes for uav_id in outcome.follower_ids]
    if not slots:
        return 0.0
    return sum(uav_id in uav_ids for uav_id in slots) / len(slots)
