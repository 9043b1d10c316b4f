import pytest

from gaitmppi.learner import collect_dataset, train_bundle

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def dataset():
    return collect_dataset(episodes=50, seed=0)


@pytest.fixture(scope="session")
def trained(dataset):
    """Default-config bundle trained once per session: ``(bundle, report)``."""
    return train_bundle(dataset)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
