import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from semlab.model import SemComModel  # noqa: E402
from semlab.textcore import build_vocab, demo_corpus_path, load_corpus  # noqa: E402
from semlab.kb import MockKb  # noqa: E402
from semlab.trainer import TrainConfig, baseline_config, train_joint, train_recipe  # noqa: E402

DEMO_SEED = 0


@pytest.fixture(scope="session")
def demo_corpus():
    return load_corpus(demo_corpus_path())


@pytest.fixture(scope="session")
def untrained_model(demo_corpus):
    return SemComModel.create(build_vocab(demo_corpus), seed=DEMO_SEED)


@pytest.fixture(scope="session")
def joint_run(demo_corpus, untrained_model):
    """Default joint recipe (train, tune, resume) on the demo corpus, with wall-clock time attached."""
    t0 = time.perf_counter()
    result = train_recipe(demo_corpus, untrained_model, TrainConfig(seed=DEMO_SEED), kb=MockKb(demo_corpus.texts))
    return result, time.perf_counter() - t0


@pytest.fixture(scope="session")
def baseline_run(demo_corpus, untrained_model):
    t0 = time.perf_counter()
    result = train_joint(demo_corpus, untrained_model, baseline_config(TrainConfig(seed=DEMO_SEED)))
    return result, time.perf_counter() - t0


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one verdict line per acceptance criterion; printed in the terminal summary."""

    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
