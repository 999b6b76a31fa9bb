import numpy as np
import pytest

from gpfuse.datamodel import SynthConfig, generate_synthetic
from gpfuse.fitness import stack_dataset


@pytest.fixture(scope="session")
def tiny_splits():
    """Small planted-signal train/validation pair for engine tests."""
    train_cfg = SynthConfig(n_proteins=30, length=30, dim=12)
    val_cfg = SynthConfig(n_proteins=20, length=30, dim=12, split="validation")
    train = stack_dataset(generate_synthetic(train_cfg, 1))
    validation = stack_dataset(generate_synthetic(val_cfg, 2))
    return train, validation


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
