import numpy as np
import pytest
import torch

from src.data.examples import DatasetBundle, ExampleSet
from src.data.toy import make_toy_family
from src.models.networks import TwoLayerNet


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_family() -> DatasetBundle:
    return make_toy_family("fam", n_classes=6, n_train_per_class=12, n_test_per_class=4, image_size=8, seed=0)


@pytest.fixture
def tiny_net() -> TwoLayerNet:
    """A float64 network with 3*2*2 inputs, 4 hidden units and 3 classes (67 parameters)."""
    torch.manual_seed(0)
    return TwoLayerNet(in_features=12, num_classes=3, hidden=4).double()


@pytest.fixture
def tiny_batch():
    gen = torch.Generator().manual_seed(7)
    x_in = torch.randn(4, 3, 2, 2, generator=gen, dtype=torch.float64)
    y_in = torch.tensor([0, 1, 2, 1])
    x_out = torch.randn(4, 3, 2, 2, generator=gen, dtype=torch.float64)
    return x_in, y_in, x_out


def make_set(n: int, shape=(1, 4, 4), labels=None, name="set", seed=0) -> ExampleSet:
    gen = torch.Generator().manual_seed(seed)
    inputs = torch.randn((n, *shape), generator=gen)
    label_tensor = torch.as_tensor(labels) if labels is not None else None
    return ExampleSet([f"{name}/{i}" for i in range(n)], inputs, label_tensor, name=name)


def smoke_config_dict(**overrides) -> dict:
    """A toy experiment small enough to run in seconds on CPU."""
    config = {
        "data": {
            "n_classes": 6,
            "n_train_per_class": 10,
            "n_test_per_class": 4,
            "image_size": 8,
            "n_outliers_per_concept": 24,
        },
        "environment": {"n_ood": 2},
        "model": {"name": "small_conv", "kwargs": {"width": 4, "feature_dim": 8}},
        "standard": {"epochs": 1, "id_batch_size": 8, "optimizer": {"lr": 0.05}},
        "finetune": {"epochs": 1, "id_batch_size": 8, "optimizer": {"lr": 0.01}},
        "objective": {"kind": "oe"},
        "scorers": ["msp", "energy"],
        "seed": 0,
    }
    config.update(overrides)
    return config
