"""Shared fixtures: the bundled Monte Carlo configs are expensive to run, so
the full-size runs happen once per session and several acceptance checks
read from the same results."""
from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass
from importlib import resources

import pytest

from conformalkit.simlab import config_from_dict, run_experiment

CONTINUOUS_CONFIGS = (
    "normal_upper_bound",
    "student_t_upper_bound",
    "mixture_upper_bound",
)
CATEGORICAL_CONFIGS = (
    "balanced_label_sets",
    "imbalanced_label_sets",
    "highly_imbalanced_label_sets",
)


def load_bundled_config(name: str) -> dict:
    raw = (resources.files("conformalkit") / "configs" / f"{name}.json").read_text()
    return json.loads(raw)


@dataclass(frozen=True)
class RunSuite:
    """Results of a family of bundled configs plus the wall time they cost,
    so acceptance tests can count simulation time against their budgets."""

    runs: dict
    elapsed: float


def _run(name: str):
    with warnings.catch_warnings():
        # the balanced pmf legitimately trips the tied-probability warning
        warnings.simplefilter("ignore")
        config = config_from_dict(load_bundled_config(name))
        return config, run_experiment(config)


def _run_suite(names) -> RunSuite:
    t0 = time.perf_counter()
    runs = {name: _run(name) for name in names}
    return RunSuite(runs=runs, elapsed=time.perf_counter() - t0)


@pytest.fixture(scope="session")
def continuous_runs() -> RunSuite:
    """{config name: (config, rows)} for the three continuous generators."""
    return _run_suite(CONTINUOUS_CONFIGS)


@pytest.fixture(scope="session")
def categorical_runs() -> RunSuite:
    """{config name: (config, rows)} for the three label-set experiments."""
    return _run_suite(CATEGORICAL_CONFIGS)


def cell(rows, method: str, n: int):
    """The unique MetricRow for (method, n)."""
    hits = [r for r in rows if r.method == method and r.n == n]
    assert len(hits) == 1
    return hits[0]
