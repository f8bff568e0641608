import sys, os; sys.path.insert(0, os.path.dirname(__file__))
import pytest

from physreason.pipeline import generate_corpus
from physreason.scene_gen import GenConfig, generate_video_set, set_seeds

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def video_sets():
    return [generate_video_set(GenConfig(), s, f"set{k:05d}") for k, s in enumerate(set_seeds(101, 12))]


@pytest.fixture(scope="session")
def small_corpus():
    sets, _ = generate_corpus(12, seed=5)
    return sets


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
