import numpy as np
import pytest

from microopt.oracle import GridSpec, OracleParams, generate_grid_dataset
from microopt.slicemodel import ModelArch, TrainConfig, init_model, train


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_grid_dataset(GridSpec(samples_per_point=4), OracleParams(), seed=3)


@pytest.fixture(scope="session")
def quick_model(small_dataset):
    """A briefly trained model: cheap, but with non-trivial weights and normalization."""
    return train(init_model(ModelArch(), seed=1), small_dataset,
                 TrainConfig(epochs=40, lr_decay_epoch=30, batch_size=64, seed=1))


def pytest_terminal_summary(terminalreporter):
    from report import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
