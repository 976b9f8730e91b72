"""
Tests for the reputation ledger and the leader-follower mission engine
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from coalition.baselines import Nsga2Config
from coalition.config import get_settings
from coalition.errors import ConfigurationError, UnknownUavError
from coalition.mission import (
    SOLVERS,
    Bid,
    CampaignConfig,
    MissionReport,
    TaskOutcome,
    _deplete,
    candidate_pool,
    detect_and_elect,
    failure_probability,
    follower_share,
    form_coalition,
    make_bids,
    repair_rounds,
    resolve_bids,
    run_campaign,
    run_mission,
    selection_frequency,
    settle_mission,
)
from coalition.presets import get_preset
from coalition.qiga import QigaConfig
from coalition.reputation import ReputationLedger
from coalition.scenario import (
    ExecutionTimes,
    ScenarioStream,
    derive_assignment,
    generate_scenario,
    inject_failure_rate,
)
from conftest import make_scenario, make_task, make_uav


def settle(scenario, members, ledger=None, seed=0):
    """Settle a single coalition on task 0"""
    ledger = ledger or ReputationLedger(uav.id for uav in scenario.uavs)
    assign = derive_assignment(scenario, scenario.tasks[0], members, ExecutionTimes(seed))
    report = settle_mission({0: assign}, scenario, ledger, np.random.default_rng(seed), mission=1)
    return report.outcomes[0], ledger


def bid(task_id, uav_id, utility):
    return Bid(leader_id=None, task_id=task_id, uav_id=uav_id, utility=utility, pledged=(1.0,))


class TestReputationLedger:
    def test_additive_updates_members_only(self):
        ledger = ReputationLedger([0, 1, 2])
        ledger.apply(1, {0: 2.0})
        ledger.apply(2, {0: 1.0, 1: 3.0})
        assert ledger.snapshot() == {0: 3.0, 1: 3.0, 2: 0.0}
        assert ledger.trajectory(0) == [0.0, 2.0, 3.0]
        assert ledger.trajectory(2) == [0.0, 0.0, 0.0]

    def test_decay_discounts_previous_credit(self):
        ledger = ReputationLedger([0, 1], initial=4.0, mode="decay", kappa=0.5)
        ledger.apply(1, {0: 2.0})
        assert ledger[0] == 4.0
        ledger.apply(2, {0: 0.0})
        assert ledger[0] == 2.0
        assert ledger[1] == 4.0

    def test_unknown_uav(self):
        ledger = ReputationLedger([0])
        with pytest.raises(UnknownUavError):
            ledger[9]
        with pytest.raises(KeyError):
            ledger.apply(1, {9: 1.0})

    @pytest.mark.parametrize("kwargs", [{"mode": "median"}, {"kappa": 1.5}, {"kappa": -0.1}])
    def test_invalid_settings(self, kwargs):
        with pytest.raises(ConfigurationError):
            ReputationLedger([0], **kwargs)

    def test_behaves_as_mapping(self):
        ledger = ReputationLedger([2, 5], initial=1.5)
        assert len(ledger) == 2 and sorted(ledger) == [2, 5] and dict(ledger) == {2: 1.5, 5: 1.5}


class TestDetectAndElect:
    def test_nearest_uav_leads(self):
        uavs = [make_uav(0, position=(0.0, 0.0)), make_uav(1, position=(10.0, 0.0))]
        tasks = [make_task(0, position=(1.0, 0.0)), make_task(1, position=(2.0, 0.0))]
        pairs = detect_and_elect(make_scenario(uavs, tasks))
        assert [(task.id, leader) for task, leader in pairs] == [(0, 0), (1, 1)]

    def test_more_tasks_than_uavs(self):
        tasks = [make_task(0, position=(1.0, 0.0)), make_task(1, position=(5.0, 0.0))]
        pairs = detect_and_elect(make_scenario([make_uav(0)], tasks))
        assert [(task.id, leader) for task, leader in pairs] == [(0, 0), (1, None)]

    def test_leaders_distinct(self, scenario_8_2):
        leaders = [leader for _, leader in detect_and_elect(scenario_8_2)]
        assert None not in leaders and len(set(leaders)) == len(leaders)


class TestCandidatePool:
    def test_filters(self):
        uavs = [
            make_uav(0, resources=(5.0, 0.0)),
            make_uav(1, position=(5.0, 0.0), resources=(5.0, 0.0)),
            make_uav(2, position=(5.0, 0.0), resources=(0.0, 5.0)),
            make_uav(3, position=(50.0, 0.0), resources=(5.0, 0.0)),
            make_uav(4, position=(1.0, 0.0), resources=(5.0, 5.0)),
        ]
        scenario = make_scenario(uavs, [make_task(0, required=(5.0, 0.0))], call_radius=10.0)
        task = scenario.tasks[0]
        assert candidate_pool(scenario, task, 0, committed={4}) == [1]
        assert candidate_pool(scenario, task, 0, committed={4}, require_overlap=False) == [1, 2]

    def test_leader_alone_without_candidates(self, exec_times):
        scenario = make_scenario([make_uav(0), make_uav(1, position=(90.0, 0.0))], [make_task(0)], call_radius=5.0)
        assign = form_coalition(scenario.tasks[0], 0, scenario, {0: 0.0, 1: 0.0}, "moqga", exec_times, seed=1)
        assert assign.member_ids == (0,)

    def test_merge_split_is_not_leader_driven(self, exec_times):
        scenario = make_scenario([make_uav(0)], [make_task(0)])
        with pytest.raises(ConfigurationError):
            form_coalition(scenario.tasks[0], 0, scenario, {0: 0.0}, "merge-split", exec_times, seed=1)


class TestBidding:
    def test_higher_utility_wins(self):
        assert resolve_bids([bid(0, 5, 4.0), bid(1, 5, 10.0)]) == {5: 1}

    def test_tie_goes_to_lower_task(self):
        assert resolve_bids([bid(3, 5, 2.0), bid(1, 5, 2.0), bid(2, 5, 2.0)]) == {5: 1}

    def test_independent_followers(self):
        assert resolve_bids([bid(0, 1, 1.0), bid(1, 2, 1.0)]) == {1: 0, 2: 1}

    def test_bid_utility(self, exec_times):
        uavs = [make_uav(0), make_uav(1, position=(3.0, 4.0))]
        scenario = make_scenario(uavs, [make_task(0)])
        proposal = derive_assignment(scenario, scenario.tasks[0], [0, 1], exec_times)
        (only,) = make_bids({0: proposal}, {0: 0}, scenario, {0: 0.0, 1: 2.0})
        assert only.uav_id == 1 and only.task_id == 0
        assert only.utility == pytest.approx(2.0 - 0.1 * 5.0)

    def test_committed_uavs_not_invited(self, exec_times):
        uavs = [make_uav(0), make_uav(1, position=(3.0, 4.0)), make_uav(2, position=(1.0, 0.0))]
        scenario = make_scenario(uavs, [make_task(0)])
        proposal = derive_assignment(scenario, scenario.tasks[0], [0, 1, 2], exec_times)
        bids = make_bids({0: proposal}, {0: 0}, scenario, {0: 0.0, 1: 0.0, 2: 0.0}, committed={2})
        assert [b.uav_id for b in bids] == [1]


class TestRepair:
    @pytest.fixture
    def contested(self):
        """Two leaders with no resources of their own and UAV 2 nearest to both tasks"""
        uavs = [
            make_uav(0, position=(0.0, 0.0), resources=(0.0,)),
            make_uav(1, position=(10.0, 0.0), resources=(0.0,)),
            make_uav(2, position=(4.0, 0.0), resources=(5.0,)),
            make_uav(3, position=(30.0, 0.0), resources=(5.0,)),
        ]
        tasks = [make_task(0, position=(0.0, 0.0)), make_task(1, position=(10.0, 0.0))]
        return make_scenario(uavs, tasks)

    def test_rounds_per_solver(self):
        assert repair_rounds("distance", 4) == 1
        assert repair_rounds("moqga", 3) == 3
        assert repair_rounds("nsga2", 0) == 1

    def test_greedy_proposes_once(self, contested, fast_campaign):
        ledger = ReputationLedger(uav.id for uav in contested.uavs)
        report = run_mission(contested, ledger, fast_campaign(solver="distance"), mission=1)
        assert {outcome.task_id: outcome.member_ids for outcome in report.outcomes} == {0: (0, 2), 1: (1,)}
        assert [outcome.satisfied for outcome in report.outcomes] == [True, False]

    @pytest.mark.parametrize("solver", ["moqga", "nsga2"])
    def test_optimizer_replans_after_losing_a_follower(self, solver, contested, fast_campaign):
        ledger = ReputationLedger(uav.id for uav in contested.uavs)
        report = run_mission(contested, ledger, fast_campaign(solver=solver), mission=1)
        followers = sorted(uav_id for outcome in report.outcomes for uav_id in outcome.follower_ids)
        assert followers == [2, 3]
        assert all(len(outcome.follower_ids) == 1 and outcome.satisfied for outcome in report.outcomes)

    @pytest.mark.parametrize("solver", ["moqga", "distance"])
    def test_kept_followers_stay(self, solver, contested, exec_times, fast_campaign):
        ledger = {uav.id: 0.0 for uav in contested.uavs}
        assign = form_coalition(
            contested.tasks[0],
            0,
            contested,
            ledger,
            solver,
            exec_times,
            seed=1,
            config=fast_campaign(solver=solver),
            committed={1},
            kept=[3],
        )
        assert assign.member_ids == (0, 3)


class TestSettlement:
    def test_single_member_takes_all_credit(self):
        scenario = make_scenario([make_uav(0)], [make_task(0)])
        outcome, ledger = settle(scenario, [0])
        assert outcome.satisfied and outcome.violations == 0
        assert outcome.reputation_delta == {0: 5.0}
        assert ledger[0] == 5.0

    def test_equal_members_split_credit(self):
        scenario = make_scenario([make_uav(0), make_uav(1)], [make_task(0)])
        outcome, _ = settle(scenario, [0, 1])
        assert outcome.reputation_delta == {0: 2.5, 1: 2.5}

    def test_selfish_member_earns_less(self):
        uavs = [make_uav(0, resources=(4.0,)), make_uav(1, resources=(4.0,), selfish=True, contribution_fraction=0.5)]
        scenario = make_scenario(uavs, [make_task(0, required=(8.0,))])
        outcome, _ = settle(scenario, [0, 1])
        assert outcome.delivered == {0: (4.0,), 1: (2.0,)}
        assert outcome.shortfall == (2.0,) and outcome.violations == 1 and not outcome.satisfied
        assert outcome.reputation_delta[0] == pytest.approx(16 / 3)
        assert outcome.reputation_delta[1] == pytest.approx(8 / 3)
        assert sum(outcome.reputation_delta.values()) == pytest.approx(8.0)

    def test_nothing_delivered_earns_nothing(self):
        scenario = make_scenario([make_uav(0, resources=(0.0,))], [make_task(0)])
        outcome, ledger = settle(scenario, [0])
        assert outcome.reputation_delta == {0: 0.0}
        assert outcome.shortfall_total == 5.0 and ledger[0] == 0.0

    def test_failed_member_delivers_nothing(self):
        uavs = [make_uav(0), make_uav(1, failure_rates=(100.0,))]
        scenario = make_scenario(uavs, [make_task(0, required=(8.0,))])
        outcome, _ = settle(scenario, [0, 1])
        assert outcome.failed_ids == (1,)
        assert outcome.delivered[1] == (0.0,)
        assert outcome.shortfall == (3.0,)
        assert outcome.reputation_delta == {0: 8.0, 1: 0.0}

    def test_unled_task_counts_every_requirement(self):
        scenario = make_scenario([make_uav(0, resources=(5.0, 5.0))], [make_task(0, required=(5.0, 3.0))])
        ledger = ReputationLedger([0])
        report = settle_mission({}, scenario, ledger, np.random.default_rng(0), mission=1)
        (outcome,) = report.outcomes
        assert outcome.leader_id is None and outcome.violations == 2 and outcome.shortfall_total == 8.0

    def test_failure_probability(self):
        assert failure_probability(make_uav(0, failure_rates=(0.1,)), [10.0]) == pytest.approx(1 - math.exp(-1))
        assert failure_probability(make_uav(0), [10.0]) == 0.0
        assert failure_probability(inject_failure_rate(make_uav(0), 0.9), [10.0]) == 0.9

    @pytest.mark.slow
    def test_credit_splits_requirement_exactly(self):
        rng = np.random.default_rng(0)
        credited = 0
        for case in range(10_000):
            n_resources = int(rng.integers(1, 4))
            n_uavs = int(rng.integers(1, 7))
            uavs = []
            for uav_id in range(n_uavs):
                selfish = bool(rng.random() < 0.3)
                uavs.append(
                    make_uav(
                        uav_id,
                        position=(float(rng.uniform(0, 100)), float(rng.uniform(0, 100))),
                        resources=tuple(float(x) for x in rng.integers(0, 6, size=n_resources)),
                        failure_rates=tuple(float(x) for x in rng.uniform(0, 0.05, size=n_resources)),
                        selfish=selfish,
                        contribution_fraction=float(rng.uniform(0.1, 1.0)) if selfish else 1.0,
                    )
                )
            required = rng.integers(0, 8, size=n_resources).astype(float)
            required[rng.integers(n_resources)] += 1.0
            tasks = [make_task(0, required=tuple(required)), make_task(1, required=tuple(required[::-1]))]
            scenario = make_scenario(uavs, tasks)
            labels = rng.integers(-1, 2, size=n_uavs)
            exec_times = ExecutionTimes(case)
            coalitions = {
                task.id: derive_assignment(scenario, task, np.flatnonzero(labels == task.id).tolist(), exec_times)
                for task in tasks
                if np.any(labels == task.id)
            }
            ledger = ReputationLedger(range(n_uavs))
            report = settle_mission(coalitions, scenario, ledger, np.random.default_rng(case), mission=1)

            total = 0.0
            for outcome in report.outcomes:
                assert set(outcome.reputation_delta) == set(outcome.member_ids)
                credit = sum(outcome.reputation_delta.values())
                total += credit
                if credit > 0:
                    credited += 1
                    assert credit == pytest.approx(scenario.task(outcome.task_id).total_requirement)
                else:
                    assert all(delta == 0 for delta in outcome.reputation_delta.values())
            assert sum(ledger.snapshot().values()) == pytest.approx(total)
        assert credited > 1000


class TestReportModels:
    def test_overlapping_coalitions_rejected(self):
        outcome = dict(satisfied=True, shortfall=(0.0,), shortfall_total=0.0, violations=0)
        with pytest.raises(ValidationError):
            MissionReport(
                mission=1,
                solver="moqga",
                outcomes=[
                    TaskOutcome(task_id=0, leader_id=0, follower_ids=(1,), **outcome),
                    TaskOutcome(task_id=1, leader_id=2, follower_ids=(1,), **outcome),
                ],
            )

    def test_satisfied_matches_shortfall(self):
        with pytest.raises(ValidationError):
            TaskOutcome(task_id=0, satisfied=True, shortfall=(1.0,), shortfall_total=1.0, violations=1)


class TestMission:
    @pytest.mark.parametrize("solver", SOLVERS)
    def test_each_solver_produces_disjoint_coalitions(self, solver, fast_campaign, scenario_8_2):
        ledger = ReputationLedger(uav.id for uav in scenario_8_2.uavs)
        scatter = []
        report = run_mission(scenario_8_2, ledger, fast_campaign(solver=solver), mission=1, scatter=scatter)
        assert [outcome.task_id for outcome in report.outcomes] == [0, 1]
        members = [uav_id for outcome in report.outcomes for uav_id in outcome.member_ids]
        assert len(members) == len(set(members))
        assert all(point.solver == solver for point in scatter)

    def test_leaders_lead_their_elected_task(self, fast_campaign, scenario_8_2):
        ledger = ReputationLedger(uav.id for uav in scenario_8_2.uavs)
        report = run_mission(scenario_8_2, ledger, fast_campaign(), mission=1)
        elected = {task.id: leader for task, leader in detect_and_elect(scenario_8_2)}
        assert {outcome.task_id: outcome.leader_id for outcome in report.outcomes} == elected

    @pytest.mark.slow
    def test_random_missions_disjoint_and_repeatable(self):
        configs = {
            solver: CampaignConfig(
                solver=solver,
                seed=3,
                qiga=QigaConfig(population_size=6, max_iterations=4),
                nsga2=Nsga2Config(population_size=6, max_iterations=4),
            )
            for solver in SOLVERS
        }
        rng = np.random.default_rng(0)
        for case in range(10_000):
            n_tasks = int(rng.integers(1, 4))
            params = {"n_uavs": int(rng.integers(n_tasks, 3 * n_tasks + 3)), "n_tasks": n_tasks}
            scenario = generate_scenario(params, seed=case)
            config = configs[SOLVERS[case % len(SOLVERS)]]
            reports = [
                run_mission(scenario, ReputationLedger(uav.id for uav in scenario.uavs), config, mission=1)
                for _ in range(2)
            ]
            members = [uav_id for outcome in reports[0].outcomes for uav_id in outcome.member_ids]
            assert len(members) == len(set(members))
            assert reports[0] == reports[1]


class TestCampaign:
    def test_deterministic(self, fast_campaign):
        config = fast_campaign(missions=3, seed=4)
        a = run_campaign(ScenarioStream({"n_uavs": 8, "n_tasks": 2}, seed=3), config)
        b = run_campaign(ScenarioStream({"n_uavs": 8, "n_tasks": 2}, seed=3), config)
        assert a.reports == b.reports
        assert a.scatter == b.scatter
        assert a.ledger.history == b.ledger.history

    def test_missions_numbered_from_one(self, fast_campaign):
        seen = []
        result = run_campaign(
            ScenarioStream({"n_uavs": 8, "n_tasks": 2}, seed=1), fast_campaign(missions=3), on_report=seen.append
        )
        assert [report.mission for report in result.reports] == [1, 2, 3]
        assert seen == result.reports

    def test_credit_sums_to_requirement(self, fast_campaign):
        stream = ScenarioStream({"n_uavs": 8, "n_tasks": 2}, seed=2)
        result = run_campaign(stream, fast_campaign(missions=3))
        for report in result.reports:
            scenario = stream.scenario(report.mission - 1)
            for outcome in report.outcomes:
                credit = sum(outcome.reputation_delta.values())
                if credit > 0:
                    assert credit == pytest.approx(scenario.task(outcome.task_id).total_requirement)

    def test_non_members_keep_reputation(self, fast_campaign):
        result = run_campaign(
            ScenarioStream({"n_uavs": 16, "n_tasks": 2}, seed=6), fast_campaign(missions=3, reputation_mode="decay")
        )
        previous = {uav_id: 0.0 for uav_id in result.ledger}
        for report in result.reports:
            members = {uav_id for outcome in report.outcomes for uav_id in outcome.member_ids}
            for uav_id, rho in report.reputation.items():
                if uav_id not in members:
                    assert rho == previous[uav_id]
            previous = report.reputation

    def test_aggregates(self, fast_campaign):
        result = run_campaign(ScenarioStream({"n_uavs": 8, "n_tasks": 2}, seed=8), fast_campaign(missions=2))
        assert 0.0 <= result.completed_pct <= 100.0
        assert result.aggregates()["mean_violations"] == result.mean_violations >= 0

    def test_depletion_subtracts_delivered(self):
        fleet = [make_uav(0, resources=(5.0, 3.0)), make_uav(1, resources=(2.0, 2.0))]
        outcome = TaskOutcome(
            task_id=0,
            leader_id=0,
            satisfied=True,
            shortfall=(0.0, 0.0),
            shortfall_total=0.0,
            violations=0,
            delivered={0: (4.0, 3.0)},
        )
        depleted = _deplete(fleet, MissionReport(mission=1, solver="moqga", outcomes=[outcome]))
        assert depleted[0].resources == (1.0, 0.0)
        assert depleted[1] == fleet[1]


class TestStatistics:
    def test_selection_frequency_and_share(self):
        def report(mission, followers):
            outcome = TaskOutcome(
                task_id=0,
                leader_id=0,
                follower_ids=followers,
                satisfied=True,
                shortfall=(0.0,),
                shortfall_total=0.0,
                violations=0,
            )
            return MissionReport(mission=mission, solver="moqga", outcomes=[outcome], reputation={0: 0, 1: 0, 2: 0})

        reports = [report(1, (1,)), report(2, (1, 2)), report(3, (2,)), report(4, (2,))]
        assert selection_frequency(reports) == {0: 0.0, 1: 0.5, 2: 0.75}
        assert selection_frequency(reports, [1], window=(1, 2)) == {1: 1.0}
        assert follower_share(reports, [1]) == pytest.approx(2 / 5)
        assert follower_share([], [1]) == 0.0


def _fast(config):
    return config.model_copy(
        update={
            "qiga": config.qiga.model_copy(update={"population_size": 60, "max_iterations": 100}),
            "nsga2": config.nsga2.model_copy(update={"population_size": 60, "max_iterations": 60}),
        }
    )


def _campaign(preset_name, solver, seed=1):
    settings = get_settings()
    preset = get_preset(preset_name)
    config = _fast(preset.campaign_config(settings, solver, seed))
    return run_campaign(ScenarioStream(preset.generation_params(settings), seed), config)


def _over_seeds(preset_name, solver):
    """Campaign results for every seed of the preset"""
    return [_campaign(preset_name, solver, seed) for seed in get_preset(preset_name).seeds]


def _means(results):
    return (
        float(np.mean([result.completed_pct for result in results])),
        float(np.mean([result.mean_violations for result in results])),
    )


def _window(results, first, last):
    return [report for result in results for report in result.reports if first <= report.mission <= last]


@pytest.mark.slow
class TestCampaignBenchmarks:
    def test_point_targets_8_2(self):
        moqga_completed, moqga_violations = _means(_over_seeds("scale-8-2", "moqga"))
        distance_completed, distance_violations = _means(_over_seeds("scale-8-2", "distance"))
        assert moqga_completed >= 80.0 and abs(moqga_completed - 90.0) <= 10.0
        assert moqga_violations <= 0.6 and abs(moqga_violations - 0.3) <= 0.5
        assert abs(distance_completed - 67.0) <= 10.0
        assert abs(distance_violations - 1.6) <= 0.5

    @pytest.mark.parametrize("preset_name", ["scale-8-2", "scale-16-4"])
    def test_solver_ordering(self, preset_name):
        means = {solver: _means(_over_seeds(preset_name, solver)) for solver in ("moqga", "nsga2", "distance")}
        completed = {solver: value[0] for solver, value in means.items()}
        violations = {solver: value[1] for solver, value in means.items()}
        # both optimizers usually reach the same per-leader optimum
        assert completed["moqga"] >= completed["nsga2"] - 2.0
        assert completed["nsga2"] > completed["distance"]
        assert violations["moqga"] <= violations["nsga2"] + 0.1
        assert violations["nsga2"] < violations["distance"]

    @pytest.mark.parametrize("preset_name", ["scale-8-2", "scale-16-4"])
    def test_merge_split_band(self, preset_name):
        completed, _ = _means(_over_seeds(preset_name, "merge-split"))
        assert 40.0 <= completed <= 60.0

    def test_selfish_uavs_lose_reputation_and_selection(self):
        preset = get_preset("selfish-8-2")
        results = _over_seeds("selfish-8-2", "moqga")
        assert all(result.config.reputation_mode == "decay" for result in results)
        mean_rho = {uav_id: np.mean([result.ledger[uav_id] for result in results]) for uav_id in results[0].ledger}
        honest_ids = [uav_id for uav_id in mean_rho if uav_id not in preset.selfish_ids]
        for uav_id in preset.selfish_ids:
            assert mean_rho[uav_id] < min(mean_rho[honest] for honest in honest_ids)

        early, late = _window(results, 1, 10), _window(results, 21, 30)
        assert follower_share(late, preset.selfish_ids) < follower_share(early, preset.selfish_ids)
        late_rate = selection_frequency(late)
        selfish_rate = np.mean([late_rate[uav_id] for uav_id in preset.selfish_ids])
        honest_rate = np.mean([late_rate[uav_id] for uav_id in honest_ids])
        assert selfish_rate < honest_rate

    def test_unreliable_uavs_rarely_recruited(self):
        preset = get_preset("unreliable-8-2")
        results = _over_seeds("unreliable-8-2", "moqga")
        reports = [report for result in results for report in result.reports]
        assert follower_share(reports, preset.failure_overrides) < 0.25
