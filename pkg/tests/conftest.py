import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from slipstick import scenario as scn  # noqa: E402
from slipstick.ssmodel import load_controller  # noqa: E402
from slipstick.xfer import XferParams  # noqa: E402


@pytest.fixture(scope="session")
def scenarios():
    return {name: scn.load_scenario(name) for name in scn.SCENARIO_NAMES}


@pytest.fixture(scope="session")
def dims(scenarios):
    return {name: scn.derive_dimensionless(sp) for name, sp in scenarios.items()}


@pytest.fixture(scope="session")
def xparams(dims):
    return {name: XferParams.from_dim(dp) for name, dp in dims.items()}


@pytest.fixture(scope="session")
def controllers():
    return {"gray": load_controller("gray"), "blue": load_controller("blue")}


@pytest.fixture(scope="session")
def sectors():
    return {k: scn.SectorBounds(**v) for k, v in scn.PUBLISHED_SECTORS.items()}
