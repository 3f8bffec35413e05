import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from degradation_doe.scenario_io import load_scenario  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"


@pytest.fixture(scope="session")
def ex1():
    return load_scenario(SCENARIOS / "example1.json")


@pytest.fixture(scope="session")
def ex2():
    return load_scenario(SCENARIOS / "example2.json")


@pytest.fixture(scope="session")
def ex3():
    return load_scenario(SCENARIOS / "example3.json")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def scenario_dir():
    return SCENARIOS
