import numpy as np
import pytest

from cvarrec.config import ExperimentConfig
from cvarrec.harness import prepare


def small_config(**kw) -> ExperimentConfig:
    base = dict(synthetic_users=120, synthetic_items=60, synthetic_interactions=6000, batch_size=256,
                seeds=[1], backbone=["DeepFM"], pretrain_epochs=1, warm_epochs=1)
    base.update(kw)
    return ExperimentConfig(**base).validate()


@pytest.fixture(scope="session")
def small_cfg():
    return small_config()


@pytest.fixture(scope="session")
def small_prep(small_cfg):
    return prepare(small_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
