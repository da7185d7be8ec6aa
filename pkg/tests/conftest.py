import numpy as np
import pytest

from compliant_catch.model import default_home, default_model
from compliant_catch.plstm import TrainConfig, generate_demos, train

# acceptance lines collected during the run and echoed in the terminal summary
ACCEPTANCE_LINES = []

TRAIN_SEED = 7
TRAIN_DEMOS = 2000
TRAIN_EPOCHS = 200


@pytest.fixture
def model():
    return default_model()


@pytest.fixture
def home():
    return default_home()


@pytest.fixture(scope="session")
def demo_set():
    return generate_demos(TRAIN_DEMOS, TRAIN_SEED)


@pytest.fixture(scope="session")
def heldout_demos():
    return generate_demos(500, TRAIN_SEED + 1)


@pytest.fixture(scope="session")
def trained(demo_set):
    """The network every simulation criterion runs with: 2000 demos, 200 epochs, seed 7."""
    params, curve = train(demo_set, TRAIN_EPOCHS, seed=TRAIN_SEED, cfg=TrainConfig(use_pe=True))
    return params, curve


@pytest.fixture(scope="session")
def trained_without_pe(demo_set):
    params, curve = train(demo_set, TRAIN_EPOCHS, seed=TRAIN_SEED, cfg=TrainConfig(use_pe=False))
    return params, curve


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
