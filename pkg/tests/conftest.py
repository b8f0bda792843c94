"""Shared fixtures: bundled configs and cached scenario runs.

Closed-loop runs are expensive (tens of seconds in total), so each
bundled scenario is integrated once per session and shared by every
test that inspects its trace.  Wall time is recorded because the
acceptance suite asserts runtime budgets.
"""

import pathlib
import time
from collections import namedtuple

import pytest

from uclf_adapt.config import load_scenario, parse_config
from uclf_adapt.simloop import run_scenario

CONFIG_DIR = pathlib.Path(__file__).resolve().parents[1] / "src" / "uclf_adapt" / "configs"

RunResult = namedtuple("RunResult", "scenario trace metrics elapsed")


def config_path(name):
    path = CONFIG_DIR / name
    assert path.exists(), f"missing bundled config {name}"
    return path


@pytest.fixture(scope="session")
def configs_dir():
    return CONFIG_DIR


def _run(name):
    scenario = load_scenario(parse_config(config_path(name)))
    start = time.perf_counter()
    trace, metrics = run_scenario(scenario)
    elapsed = time.perf_counter() - start
    return RunResult(scenario, trace, metrics, elapsed)


@pytest.fixture(scope="session")
def eq7_cor1_run():
    return _run("eq7_cor1.toml")


@pytest.fixture(scope="session")
def eq7_leakage_run():
    return _run("eq7_leakage.toml")


@pytest.fixture(scope="session")
def eq7_matched_run():
    return _run("eq7_matched.toml")


@pytest.fixture(scope="session")
def eq7_composite_run():
    return _run("eq7_composite.toml")


@pytest.fixture(scope="session")
def eq7_monolithic_run():
    return _run("eq7_monolithic.toml")


@pytest.fixture(scope="session")
def eq7_noadapt_run():
    return _run("eq7_noadapt.toml")


@pytest.fixture(scope="session")
def chain3_cor1_run():
    return _run("chain3_cor1.toml")


@pytest.fixture(scope="session")
def chain3_leakage_run():
    return _run("chain3_leakage.toml")


@pytest.fixture(scope="session")
def chain3_targeted_run():
    return _run("chain3_targeted.toml")


@pytest.fixture(scope="session")
def chain3_targeted_mono_run():
    return _run("chain3_targeted_mono.toml")


@pytest.fixture(scope="session")
def min2_cor1_run():
    return _run("min2_cor1.toml")
