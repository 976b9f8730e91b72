"""
Shared fixtures for the test suite
"""

import math

import numpy as np
import pytest

from coalition.baselines import Nsga2Config
from coalition.config import get_settings
from coalition.mission import CampaignConfig
from coalition.models import ObjectiveWeights, Scenario, TaskSpec, Uav
from coalition.qiga import QigaConfig
from coalition.scenario import ExecutionTimes, generate_scenario


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch, tmp_path):
    """Settings read from a clean working directory and rebuilt per test"""
    monkeypatch.chdir(tmp_path)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


def make_uav(uav_id, position=(0.0, 0.0), resources=(5.0,), failure_rates=None, **kwargs):
    failure_rates = failure_rates if failure_rates is not None else (0.0,) * len(resources)
    return Uav(id=uav_id, position=position, resources=resources, failure_rates=failure_rates, **kwargs)


def make_task(task_id, position=(0.0, 0.0), required=(5.0,)):
    return TaskSpec(id=task_id, position=position, required=required)


def make_scenario(uavs, tasks, weights=None, call_radius=1000.0, seed=0, mu=None):
    n_resources = len(tasks[0].required) if tasks else len(uavs[0].resources)
    return Scenario(
        uavs=uavs,
        tasks=tasks,
        mu=mu or (1.0,) * n_resources,
        weights=weights or ObjectiveWeights(),
        call_radius=call_radius,
        seed=seed,
    )


@pytest.fixture
def uav_factory():
    return make_uav


@pytest.fixture
def task_factory():
    return make_task


@pytest.fixture
def scenario_factory():
    return make_scenario


@pytest.fixture
def scenario_8_2():
    return generate_scenario({"n_uavs": 8, "n_tasks": 2}, seed=7)


@pytest.fixture
def exec_times():
    return ExecutionTimes(seed=11)


@pytest.fixture
def fast_campaign():
    """Campaign config with small optimizer budgets"""

    def build(solver="moqga", missions=3, seed=5, **kwargs):
        return CampaignConfig(
            solver=solver,
            missions=missions,
            seed=seed,
            qiga=QigaConfig(population_size=40, max_iterations=60),
            nsga2=Nsga2Config(population_size=40, max_iterations=40),
            **kwargs,
        )

    return build


def brute_force_optimum(problem):
    """Best fitness over every membership bitmap of a CoalitionProblem"""
    m = problem.m
    grid = ((np.arange(2**m)[:, None] >> np.arange(m)) & 1).astype(np.int8)
    fitness = problem.fitness(grid)
    return float(fitness.max()), grid[int(np.argmax(fitness))]


def close(a, b, tol=1e-9):
    return math.isclose(a, b, rel_tol=tol, abs_tol=tol)
