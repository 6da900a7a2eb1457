"""
Desk-scale learning comparisons between the baseline and pseudo arms.

These are direction-of-effect checks over five seeds and take tens of
minutes; run them with ``pytest -m slow``.
"""

from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

from pseudo_action.config import RunConfig
from pseudo_action.harness import read_metrics, run_experiment

pytestmark = pytest.mark.slow

SEEDS = range(5)


def final_return(config: RunConfig) -> float:
    return read_metrics(run_experiment(config).metrics_path).final_performance()


def finals(tmp_path_factory, algo, arms):
    out = str(tmp_path_factory.mktemp(algo))
    configs = {
        (mode, repeat): [RunConfig(algo=algo, mode=mode, repeat=repeat, seed=s, out=out) for s in SEEDS]
        for mode, repeat in arms
    }
    with ProcessPoolExecutor() as pool:
        return {arm: np.array(list(pool.map(final_return, runs))) for arm, runs in configs.items()}


@pytest.fixture(scope="module")
def pendulum(tmp_path_factory):
    return finals(tmp_path_factory, "sac", [("baseline", 4), ("baseline", 8), ("pseudo", 8)])


@pytest.fixture(scope="module")
def pushbar(tmp_path_factory):
    return finals(tmp_path_factory, "dqn", [("baseline", 4), ("pseudo", 4), ("baseline", 8), ("pseudo", 8)])


def test_pendulum_pseudo_beats_baseline_at_long_repeats(pendulum):
    wins = pendulum[("pseudo", 8)] > pendulum[("baseline", 8)]
    assert wins.sum() >= 4


def test_pendulum_baseline_degrades_from_medium_to_long_repeats(pendulum):
    assert pendulum[("baseline", 8)].mean() < pendulum[("baseline", 4)].mean()


def test_pushbar_pseudo_at_least_matches_baseline_at_long_repeats(pushbar):
    assert pushbar[("pseudo", 8)].mean() >= pushbar[("baseline", 8)].mean()


def test_pushbar_modes_overlap_at_medium_repeats(pushbar):
    baseline, pseudo = pushbar[("baseline", 4)], pushbar[("pseudo", 4)]
    assert baseline.min() <= pseudo.max() and pseudo.min() <= baseline.max()
