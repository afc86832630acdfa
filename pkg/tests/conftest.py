import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # oracles importable as a module

from coaplan import load_kb_files, load_scenario_file, plan

DATA = Path(__file__).parent.parent / "src" / "coaplan" / "data"


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def base_kb():
    return load_kb_files([DATA / "kb_base.yaml"])


@pytest.fixture(scope="session")
def brigade_scenario():
    return load_scenario_file(DATA / "scenario_brigade.yaml")


@pytest.fixture(scope="session")
def valley_scenario():
    return load_scenario_file(DATA / "scenario_valley.yaml")


@pytest.fixture(scope="session")
def brigade_plan(brigade_scenario, base_kb):
    return plan(brigade_scenario, base_kb)
