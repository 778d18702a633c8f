import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

import iotnet as io
from iotnet import fixtures


@pytest.fixture(scope="session")
def tiny():
    return fixtures.tiny_fixture()


@pytest.fixture(scope="session")
def synth30():
    """The seeded 30-node problem with its enumerated path space and costs."""
    fx = fixtures.synthetic30(0)
    nu0, nuT = fx.marginals()
    space = io.enumerate_paths(fx.network, fx.horizon, sorted(fx.supply),
                               sorted(fx.demand), fx.ruled)
    costs = io.path_costs(space, fx.ruled, fx.network)
    return {"fx": fx, "space": space, "costs": costs, "nu0": nu0, "nuT": nuT}


@pytest.fixture(scope="session")
def risk30():
    fx = fixtures.risk30(0)
    nu0, nuT = fx.marginals()
    space = io.enumerate_paths(fx.network, fx.horizon, sorted(fx.supply),
                               sorted(fx.demand), fx.ruled)
    return {"fx": fx, "space": space, "nu0": nu0, "nuT": nuT}


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
