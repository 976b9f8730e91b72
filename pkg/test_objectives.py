"""
Tests for coalition cost, reliability, shortfall, penalty and the fitness oracle
"""

import math

import numpy as np
import pytest

from coalition.models import CoalitionAssignment, ObjectiveWeights, TaskSpec
from coalition.objectives import (
    CoalitionProblem,
    coalition_cost,
    coalition_reputation,
    evaluate,
    log_reliability,
    penalty,
    resource_shortfall,
)
from coalition.scenario import ExecutionTimes, generate_scenario
from conftest import close, make_task


def assignment(exec_cost, exec_time, travel, failure_rates=None, members=None):
    n_resources = len(exec_cost[0]) if exec_cost else 1
    members = members or tuple(range(len(exec_cost)))
    failure_rates = failure_rates or tuple((0.0,) * n_resources for _ in exec_cost)
    return CoalitionAssignment(
        task_id=0,
        member_ids=members,
        n_resources=n_resources,
        exec_cost=exec_cost,
        exec_time=exec_time,
        travel_time=travel,
        failure_rates=failure_rates,
    )


EMPTY = CoalitionAssignment(task_id=0, n_resources=1)


class TestCost:
    def test_empty(self):
        assert coalition_cost(EMPTY) == 0

    def test_single_resource(self):
        assert coalition_cost(assignment(((2.0,),), ((3.0,),), (1.0,))) == 7

    def test_travel_counted_per_resource(self):
        assert coalition_cost(assignment(((2.0, 1.0),), ((3.0, 4.0),), (1.0,))) == 12

    def test_travel_once_per_member(self):
        assert coalition_cost(assignment(((2.0, 1.0),), ((3.0, 4.0),), (1.0,)), travel_once_per_member=True) == 11

    def test_idle_member_with_travel_raises_cost(self):
        base = assignment(((2.0,),), ((3.0,),), (1.0,))
        grown = assignment(((2.0,), (0.0,)), ((3.0,), (12.0,)), (1.0, 4.0))
        assert coalition_cost(grown) > coalition_cost(base)
        assert log_reliability(grown) == log_reliability(base)


class TestLogReliability:
    def test_failure_free(self):
        assert log_reliability(assignment(((1.0,),), ((10.0,),), (0.0,))) == 0

    def test_single_term(self):
        value = log_reliability(assignment(((1.0,),), ((10.0,),), (0.0,), failure_rates=((0.1,),)))
        assert close(value, -1.0)
        assert close(math.exp(value), 0.36787944117144233)

    def test_members_add_in_log_space(self):
        value = log_reliability(assignment(((1.0,), (1.0,)), ((5.0,), (5.0,)), (0.0, 0.0), ((0.1,), (0.1,))))
        assert close(value, -1.0)

    def test_empty(self):
        assert log_reliability(EMPTY) == 0


class TestShortfallAndPenalty:
    def test_no_requirement(self):
        assign = assignment(((1.0, 1.0),), ((10.0, 10.0),), (0.0,))
        task = TaskSpec.model_construct(id=0, position=(0.0, 0.0), required=(0.0, 0.0))
        assert resource_shortfall(assign, task) == (0.0, 0.0)

    def test_partial(self):
        assert resource_shortfall(assignment(((3.0,),), ((10.0,),), (0.0,)), make_task(0, required=(5.0,))) == (2.0,)

    def test_clamped(self):
        assert resource_shortfall(assignment(((9.0,),), ((10.0,),), (0.0,)), make_task(0, required=(5.0,))) == (0.0,)

    @pytest.mark.parametrize(
        "shortfall, gamma, expected",
        [((0.0, 0.0), 7.0, 0.0), ((2.0, 0.0), 10.0, 20.0), ((1.0, 1.0), 0.0, 0.0)],
    )
    def test_penalty(self, shortfall, gamma, expected):
        assert penalty(shortfall, gamma) == expected


class TestReputation:
    def test_sums(self):
        ledger = {0: 1.5, 1: 2.5, 2: 7.0}
        assert coalition_reputation([], ledger) == 0
        assert coalition_reputation([0, 1], ledger) == 4.0
        assert coalition_reputation([2], ledger) == 7.0

    def test_unknown_member(self):
        with pytest.raises(KeyError):
            coalition_reputation([9], {0: 1.0})


class TestEvaluate:
    def test_empty_coalition_pays_full_penalty(self):
        b = evaluate(EMPTY, make_task(0, required=(5.0,)), {}, ObjectiveWeights(eta1=0, eta2=0, gamma=10))
        assert (b.objective, b.penalty, b.fitness) == (0.0, 50.0, -50.0)
        assert not b.feasible

    def test_weighted_sum(self):
        # C = 7, ln R = -1, P = 4
        assign = assignment(((2.0,),), ((3.0,),), (1.0,), failure_rates=((1.0 / 3.0,),), members=(0,))
        b = evaluate(assign, make_task(0, required=(1.0,)), {0: 4.0}, ObjectiveWeights(eta1=2, eta2=1, gamma=100))
        assert close(b.cost, 7.0) and close(b.log_reliability, -1.0) and b.reputation == 4.0
        assert close(b.objective, 5.0)
        assert close(b.fitness, -5.0)
        assert b.feasible and b.penalty == 0

    def test_degenerate_weights(self):
        assign = assignment(((2.0,),), ((3.0,),), (1.0,), failure_rates=((0.2,),))
        b = evaluate(assign, make_task(0, required=(9.0,)), {0: 3.0}, ObjectiveWeights(eta1=0, eta2=0, gamma=0))
        assert b.fitness == -b.cost

    def test_fitness_strictly_decreasing_in_shortfall(self):
        assign = assignment(((2.0,),), ((3.0,),), (1.0,))
        weights = ObjectiveWeights(gamma=5)
        values = [evaluate(assign, make_task(0, required=(tau,)), {0: 0.0}, weights).fitness for tau in (3, 4, 5)]
        assert values[0] > values[1] > values[2]

    def test_referentially_transparent(self):
        assign = assignment(((2.0, 1.0),), ((3.0, 4.0),), (1.5,), failure_rates=((1e-4, 5e-5),))
        task = make_task(0, required=(4.0, 4.0))
        first = evaluate(assign, task, {0: 0.3}, ObjectiveWeights())
        assert all(evaluate(assign, task, {0: 0.3}, ObjectiveWeights()) == first for _ in range(1000))


class TestCoalitionProblem:
    @pytest.fixture
    def problem(self):
        scenario = generate_scenario({"n_uavs": 9, "n_tasks": 1}, seed=21)
        ledger = {uav.id: 0.1 * uav.id for uav in scenario.uavs}
        return CoalitionProblem(scenario, scenario.tasks[0], 0, list(range(1, 9)), ledger, ExecutionTimes(seed=5))

    def test_vectorized_matches_reference(self, problem):
        rng = np.random.default_rng(0)
        bits = rng.integers(0, 2, size=(25, problem.m))
        fitness = problem.fitness(bits)
        points, shortfall = problem.objectives(bits)
        for row, value, point, total in zip(bits, fitness, points, shortfall):
            b = problem.breakdown(row)
            assert value == pytest.approx(b.fitness, rel=1e-9, abs=1e-9)
            assert list(point) == pytest.approx([b.cost, -b.log_reliability, -b.reputation], rel=1e-9, abs=1e-9)
            assert total == pytest.approx(sum(b.shortfall), abs=1e-9)

    def test_leader_always_member(self, problem):
        assert problem.members(np.zeros(problem.m)) == (0,)
        assert problem.members(np.ones(problem.m)) == tuple(range(9))

    def test_penalty_zero_iff_feasible(self):
        checked = feasible = 0
        for seed in range(40):
            scenario = generate_scenario({"n_uavs": 9, "n_tasks": 1}, seed=300 + seed)
            ledger = {uav.id: 0.0 for uav in scenario.uavs}
            problem = CoalitionProblem(scenario, scenario.tasks[0], 0, list(range(1, 9)), ledger, ExecutionTimes(seed))
            grid = ((np.arange(2**problem.m)[:, None] >> np.arange(problem.m)) & 1).astype(np.int8)
            _, shortfall = problem.objectives(grid)
            for row, total in zip(grid, shortfall):
                b = problem.breakdown(row)
                assert (b.penalty == 0) == b.feasible == (total == 0)
                checked += 1
                feasible += b.feasible
        assert checked >= 10_000
        assert 0 < feasible < checked

    def test_rejects_wrong_length(self, problem):
        with pytest.raises(ValueError):
            problem.fitness(np.ones((2, problem.m + 1)))


class TestCommittedFollowers:
    @pytest.fixture
    def scenario(self):
        return generate_scenario({"n_uavs": 9, "n_tasks": 1}, seed=21)

    def test_committed_always_members(self, scenario):
        ledger = {uav.id: 0.0 for uav in scenario.uavs}
        problem = CoalitionProblem(
            scenario, scenario.tasks[0], 0, [1, 2, 5], ledger, ExecutionTimes(seed=5), committed=[7, 3]
        )
        assert problem.m == 3
        assert problem.members([0, 0, 0]) == (0, 3, 7)
        assert problem.members([1, 0, 1]) == (0, 1, 3, 5, 7)

    def test_committed_terms_match_reference(self, scenario):
        ledger = {uav.id: 0.2 * uav.id for uav in scenario.uavs}
        problem = CoalitionProblem(
            scenario, scenario.tasks[0], 0, [1, 2, 5, 6], ledger, ExecutionTimes(seed=5), committed=[3]
        )
        for row in np.random.default_rng(2).integers(0, 2, size=(16, problem.m)):
            assert problem.fitness(row)[0] == pytest.approx(problem.breakdown(row).fitness, rel=1e-9, abs=1e-9)

    def test_leader_in_committed_is_ignored(self, scenario):
        ledger = {uav.id: 0.0 for uav in scenario.uavs}
        problem = CoalitionProblem(
            scenario, scenario.tasks[0], 0, [1], ledger, ExecutionTimes(seed=5), committed=[0, 4]
        )
        assert problem.committed == (4,)

    def test_candidates_overlapping_committed_rejected(self, scenario):
        ledger = {uav.id: 0.0 for uav in scenario.uavs}
        with pytest.raises(ValueError):
            CoalitionProblem(scenario, scenario.tasks[0], 0, [1, 4], ledger, ExecutionTimes(seed=5), committed=[4])
