import pytest

from taglabel.domain import MaterialClass
from taglabel.experiment import ExperimentConfig, featurize
from taglabel.sim import ScenarioConfig, generate_corpus


@pytest.fixture(scope="session")
def short_corpus():
    return generate_corpus(ScenarioConfig(duration=40.0), seed=11)


@pytest.fixture(scope="session")
def short_windows(short_corpus):
    return featurize(short_corpus)


@pytest.fixture(scope="session")
def small_config():
    return ExperimentConfig(seed=5, duration=40.0, holdout_size=120)


@pytest.fixture
def materials():
    return list(MaterialClass)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
