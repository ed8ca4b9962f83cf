"""Shared fixtures."""

import os
from pathlib import Path

import numpy as np
import pytest

from deepkm.data.datasets import Dataset, synthetic_dataset
from deepkm.energy.spec import EnergyLayer, NetworkSpec
from deepkm.nn.network import ModelParams, init_params, lenet5, toy_convnet


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def toy_model() -> ModelParams:
    return init_params(toy_convnet(), seed=3)


@pytest.fixture
def toy_dataset() -> Dataset:
    gen = np.random.default_rng(7)
    images = gen.random((24, 1, 6, 6))
    labels = gen.integers(0, 3, size=24)
    return Dataset(images=images, labels=labels, num_classes=3)


@pytest.fixture
def small_lenet() -> ModelParams:
    """LeNet-5 sized for the 16x16 synthetic patterns."""
    return init_params(lenet5((1, 16, 16), 4), seed=0)


@pytest.fixture
def synthetic_split() -> tuple[Dataset, Dataset]:
    return synthetic_dataset(96, seed=0, split="train"), synthetic_dataset(48, seed=1, split="test")


@pytest.fixture
def lenet_valid_spec() -> NetworkSpec:
    """LeNet-5 on 28x28 with valid convolutions (24 -> 12 -> 8 -> 4)."""
    return NetworkSpec(
        name="lenet5-valid",
        b_w=16,
        b_x=16,
        layers=[
            EnergyLayer(name="conv1", kind="conv", s=5, c=1, m=6, h_in=28, w_in=28),
            EnergyLayer(name="conv2", kind="conv", s=5, c=6, m=16, h_in=12, w_in=12),
            EnergyLayer(name="fc1", kind="fullyconnected", in_dim=256, out_dim=120),
            EnergyLayer(name="fc2", kind="fullyconnected", in_dim=120, out_dim=84),
            EnergyLayer(name="fc3", kind="fullyconnected", in_dim=84, out_dim=10),
        ],
    )


@pytest.fixture
def mnist_dir() -> Path:
    directory = os.environ.get("DEEPKM_MNIST_DIR")
    if not directory:
        pytest.skip("DEEPKM_MNIST_DIR is not set")
    return Path(directory)
