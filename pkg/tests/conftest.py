import os
import sys

sys.path.insert(0, os.path.dirname(__file__))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: longer running checks (still part of the default run)")


import pytest  # noqa: E402


@pytest.fixture(scope="session")
def small_trained():
    """A quickly trained network on the 2K-point sphere with 2% noise."""
    from n2nsdf.core import make_observation_set, sphere_points
    from n2nsdf.trainer import TrainConfig, train

    clean = sphere_points(2000)
    obs = make_observation_set(clean, 1, 0.02, 0)
    cfg = TrainConfig(iterations=400, hidden_layers=2, hidden_width=32, seed=0)
    return train(obs, cfg).network, obs, clean


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
