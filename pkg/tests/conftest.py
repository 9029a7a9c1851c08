import numpy as np
import pytest
import torch

from environment import TorusPotential, make_env
from gfn_core import GfnModel


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run tests marked slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def line_env():
    return make_env("line")


@pytest.fixture(scope="session")
def grid_env():
    return make_env("grid")


@pytest.fixture(scope="session")
def torus_env():
    return make_env("torus", potential=TorusPotential.synthetic())


@pytest.fixture
def make_model():
    def factory(env, hidden=16, layers=2, dropout=0.2, forward_heads=1, seed=0):
        torch.manual_seed(seed)
        return GfnModel(
            dim=env.dim,
            kind=env.policy_kind,
            horizon=env.horizon,
            hidden=hidden,
            layers=layers,
            dropout=dropout,
            forward_heads=forward_heads,
        )

    return factory
