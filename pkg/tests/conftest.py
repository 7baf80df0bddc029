"""
Shared fixtures: seeded randomness, isolated application settings and the
preset runs several test modules inspect
"""
import numpy as np
import pytest
import yaml

from relaysim.scenarios import preset
from relaysim.solver import run


def pytest_addoption(parser):
    parser.addoption("--seed", type=int, default=0, help="Seed for randomized tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running simulation or convergence study")


@pytest.fixture
def seed(request):
    return request.config.getoption("--seed")


@pytest.fixture
def rng(seed):
    return np.random.default_rng(seed)


@pytest.fixture
def settings_file(tmp_path, monkeypatch):
    """relay_config.yaml with the log file, metrics database and run root under tmp_path"""
    for name in ("RELAY_CONFIG", "RELAY_METRICS_DB", "RELAY_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
    path = tmp_path / "relay_config.yaml"
    path.write_text(yaml.safe_dump({
        'logging': {'level': 'WARNING', 'file': str(tmp_path / "relay.log")},
        'monitoring': {'enable_metrics': True, 'db_path': str(tmp_path / "metrics.db")},
        'output': {'root': str(tmp_path / "runs"), 'workers': 1},
    }))
    return path


# -- preset runs ---------------------------------------------------------------

@pytest.fixture(scope="session")
def oscillator_spec():
    return preset("oscillator")


@pytest.fixture(scope="session")
def oscillator_run(oscillator_spec):
    return run(oscillator_spec.solver, oscillator_spec)


@pytest.fixture(scope="session")
def transversal_spec():
    return preset("transversal-1d")


@pytest.fixture(scope="session")
def transversal_run(transversal_spec):
    return run(transversal_spec.solver, transversal_spec)
