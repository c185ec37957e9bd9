import numpy as np
import pytest

from uasam.data import SynthConfig, generate, split


@pytest.fixture(scope="session")
def tiny_dataset():
    """40 small examples shared by training-path tests."""
    return generate(SynthConfig(num_examples=40, seed=7))


@pytest.fixture(scope="session")
def tiny_splits(tiny_dataset):
    train_all, test = split(tiny_dataset, 0.8, seed=0)
    return train_all[:-6], train_all[-6:], test


@pytest.fixture()
def nprng():
    return np.random.default_rng(1234)
