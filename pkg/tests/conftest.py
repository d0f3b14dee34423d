import sys
from fractions import Fraction
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from trainchain.consensus import RoundConfig
from trainchain.nn.task import generate_task
from trainchain.scenario import MinerConfig, ScenarioConfig, TaskConfig, TrainerConfig

# verdict lines collected by the acceptance module, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def tiny_task():
    """64-record, 3-class task shared by fast tests."""
    return generate_task(42, 64, 128, 3, num_classes=3, center_radius=3.0, noise=1.0)


def small_scenario(seed=5, rounds=3, miners=None, **overrides):
    """Fast scenario used across runner tests: trains in milliseconds."""
    base = dict(
        seed=seed,
        rounds=rounds,
        name="test",
        task=TaskConfig(n_train=64, n_test=128, classes=3, noise=1.2),
        trainer=TrainerConfig(hidden=(16, 16), learning_rate=3e-4, checkpoints=2),
        round=RoundConfig(60_000, 3_000),
        epoch_budget=60,
        validate_ms=200,
        miners=miners
        or (
            MinerConfig("alice", "honest", Fraction(1, 2)),
            MinerConfig("bob", "honest", Fraction(1, 2)),
        ),
    )
    base.update(overrides)
    return ScenarioConfig(**base)
