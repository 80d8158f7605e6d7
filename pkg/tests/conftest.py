import numpy as np
import pytest

from etld.events import synthesize_sequence
from etld.fixtures import FIXTURE_DURATION_US, init_roi, occlusion_fixture, translation_fixture
from etld.pipeline import EtldConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def short_scene():
    """Two seconds of the translation scene; cheap enough for unit tests."""
    events, ann = synthesize_sequence(translation_fixture(seed=0), 2_000_000)
    return events, ann, init_roi(ann, EtldConfig().train_us)


@pytest.fixture(scope="session")
def translation_scene():
    events, ann = synthesize_sequence(translation_fixture(seed=0), FIXTURE_DURATION_US)
    return events, ann, init_roi(ann, EtldConfig().train_us)


@pytest.fixture(scope="session")
def occlusion_scene():
    events, ann = synthesize_sequence(occlusion_fixture(seed=0), FIXTURE_DURATION_US)
    return events, ann, init_roi(ann, EtldConfig().train_us)


ACCEPTANCE_LINES: list[str] = []


def report_line(line: str) -> None:
    """Record a criterion verdict; printed now and again in the session summary."""
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
