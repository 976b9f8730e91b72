"""
Scalar evaluations of a candidate coalition: cost, log-reliability, reputation,
the weighted-sum objective, constraint shortfall, penalty and fitness
"""

from typing import Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .models import CoalitionAssignment, ObjectiveBreakdown, ObjectiveWeights, Scenario, TaskSpec
from .scenario import ExecutionTimes, derive_assignment, travel_time


def _matrix(rows: Tuple[Tuple[float, ...], ...], n_resources: int) -> np.ndarray:
    return np.asarray(rows, dtype=float).reshape(len(rows), n_resources)


def coalition_cost(assign: CoalitionAssignment, travel_once_per_member: bool = False) -> float:
    """C = sum_i sum_j (e_ij * k_ij + a_i).

    Travel time sits inside the double sum, so each member's travel is counted
    once per resource type unless `travel_once_per_member` is set.
    """
    if assign.is_empty:
        return 0.0
    e = _matrix(assign.exec_cost, assign.n_resources)
    k = _matrix(assign.exec_time, assign.n_resources)
    travel_multiplier = 1 if travel_once_per_member else assign.n_resources
    return float(np.sum(e * k) + travel_multiplier * np.sum(assign.travel_time))


def log_reliability(assign: CoalitionAssignment) -> float:
    """ln R = -sum_i sum_j lambda_ij * k_ij"""
    if assign.is_empty:
        return 0.0
    lam = _matrix(assign.failure_rates, assign.n_resources)
    k = _matrix(assign.exec_time, assign.n_resources)
    return -float(np.sum(lam * k))


def resource_shortfall(assign: CoalitionAssignment, task: TaskSpec) -> Tuple[float, ...]:
    """max(0, tau_j - sum_i e_ij) per resource"""
    supplied = _matrix(assign.exec_cost, assign.n_resources).sum(axis=0)
    gap = np.maximum(0.0, np.asarray(task.required) - supplied)
    return tuple(float(x) for x in gap)


def penalty(shortfall: Sequence[float], gamma: float) -> float:
    return float(gamma * sum(shortfall))


def coalition_reputation(members: Iterable[int], ledger: Mapping[int, float]) -> float:
    """P = sum of the members' current reputations"""
    return float(sum(ledger[uav_id] for uav_id in members))


def evaluate(
    assign: CoalitionAssignment,
    task: TaskSpec,
    ledger: Mapping[int, float],
    weights: ObjectiveWeights,
    travel_once_per_member: bool = False,
) -> ObjectiveBreakdown:
    """Fill every component of the breakdown; fitness = -(objective + penalty)"""
    cost = coalition_cost(assign, travel_once_per_member)
    log_rel = log_reliability(assign)
    reputation = coalition_reputation(assign.member_ids, ledger)
    objective = cost - weights.eta1 * log_rel - weights.eta2 * reputation
    shortfall = resource_shortfall(assign, task)
    g = penalty(shortfall, weights.gamma)
    return ObjectiveBreakdown(
        cost=cost,
        log_reliability=log_rel,
        reputation=reputation,
        objective=objective,
        penalty=g,
        fitness=-(objective + g),
        shortfall=shortfall,
    )


class CoalitionProblem:
    """One leader's membership problem over a fixed candidate list.

    Cost, log-reliability, reputation and per-resource supply are all additive
    over members, so a population of bitmaps is scored with one matrix product
    per term. Bit i selects ``candidate_ids[i]``; the leader and any `committed`
    followers are always members.
    """

    def __init__(
        self,
        scenario: Scenario,
        task: TaskSpec,
        leader_id: Optional[int],
        candidate_ids: Sequence[int],
        reputation: Mapping[int, float],
        exec_times: ExecutionTimes,
        weights: Optional[ObjectiveWeights] = None,
        travel_once_per_member: bool = False,
        committed: Sequence[int] = (),
    ):
        self.scenario = scenario
        self.task = task
        self.leader_id = leader_id
        self.committed = tuple(sorted(set(committed) - {leader_id}))
        self.candidate_ids = tuple(candidate_ids)
        if set(self.candidate_ids) & set(self._fixed_ids()):
            raise ValueError("candidates must not include the leader or committed followers")
        self.reputation = {uav_id: float(reputation[uav_id]) for uav_id in self._all_ids()}
        self.exec_times = exec_times
        self.weights = weights or scenario.weights
        self.travel_once_per_member = travel_once_per_member

        mu = np.asarray(scenario.resource_cost_coeff)
        travel_multiplier = 1 if travel_once_per_member else scenario.n_resources

        def terms(uav_id: int):
            uav = scenario.uav(uav_id)
            e = mu * np.asarray(uav.resources)
            k = exec_times.row(task.id, uav_id, scenario.n_resources)
            cost = float(np.sum(e * k)) + travel_multiplier * travel_time(uav, task)
            log_rel = -float(np.sum(np.asarray(uav.failure_rates) * k))
            return cost, log_rel, self.reputation[uav_id], e

        fixed = [terms(uav_id) for uav_id in self._fixed_ids()]
        self._fixed_cost = sum(t[0] for t in fixed)
        self._fixed_log_rel = sum(t[1] for t in fixed)
        self._fixed_reputation = sum(t[2] for t in fixed)
        self._fixed_supply = np.sum([t[3] for t in fixed], axis=0) if fixed else np.zeros(scenario.n_resources)

        candidates = [terms(uav_id) for uav_id in self.candidate_ids]
        self._cost = np.array([t[0] for t in candidates], dtype=float)
        self._log_rel = np.array([t[1] for t in candidates], dtype=float)
        self._reputation = np.array([t[2] for t in candidates], dtype=float)
        self._supply = np.array([t[3] for t in candidates], dtype=float).reshape(len(candidates), scenario.n_resources)
        self._required = np.asarray(task.required, dtype=float)

    def _fixed_ids(self) -> Tuple[int, ...]:
        leader = () if self.leader_id is None else (self.leader_id,)
        return leader + self.committed

    def _all_ids(self) -> Tuple[int, ...]:
        return self._fixed_ids() + self.candidate_ids

    @property
    def m(self) -> int:
        return len(self.candidate_ids)

    def _batch(self, bits) -> np.ndarray:
        batch = np.atleast_2d(np.asarray(bits, dtype=float))
        if batch.shape[1] != self.m:
            raise ValueError(f"expected bitmaps of length {self.m}, got {batch.shape[1]}")
        return batch

    def components(self, bits):
        """Cost, ln R, reputation and shortfall (P x N_r) for a batch of bitmaps"""
        batch = self._batch(bits)
        cost = self._fixed_cost + batch @ self._cost
        log_rel = self._fixed_log_rel + batch @ self._log_rel
        reputation = self._fixed_reputation + batch @ self._reputation
        supply = self._fixed_supply + batch @ self._supply
        shortfall = np.maximum(0.0, self._required - supply)
        return cost, log_rel, reputation, shortfall

    def fitness(self, bits) -> np.ndarray:
        cost, log_rel, reputation, shortfall = self.components(bits)
        objective = cost - self.weights.eta1 * log_rel - self.weights.eta2 * reputation
        return -(objective + self.weights.gamma * shortfall.sum(axis=1))

    __call__ = fitness

    def objectives(self, bits) -> Tuple[np.ndarray, np.ndarray]:
        """(C, -ln R, -P) triples and total shortfall, all to be minimized"""
        cost, log_rel, reputation, shortfall = self.components(bits)
        return np.column_stack([cost, -log_rel, -reputation]), shortfall.sum(axis=1)

    def members(self, bits) -> Tuple[int, ...]:
        chosen = [uav_id for uav_id, bit in zip(self.candidate_ids, np.asarray(bits).ravel()) if bit]
        return tuple(sorted(self._fixed_ids() + tuple(chosen)))

    def assignment(self, bits) -> CoalitionAssignment:
        return derive_assignment(self.scenario, self.task, self.members(bits), self.exec_times)

    def breakdown(self, bits) -> ObjectiveBreakdown:
        return evaluate(
            self.assignment(bits),
            self.task,
            self.reputation,
            self.weights,
            self.travel_once_per_member,
        )
