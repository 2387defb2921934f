import sys
from pathlib import Path

import numpy as np
import pytest

# make the sibling oracle module importable from every test file
sys.path.insert(0, str(Path(__file__).parent))

from kalibr.forward_models import ToyModel
from kalibr.inversion import InverseProblem
from kalibr.piston import PistonScenario

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def toy_problem():
    """The nonconvex scalar benchmark: y = 0, unit noise."""
    return InverseProblem(ToyModel(), np.zeros(1), np.eye(1))


@pytest.fixture(scope="session")
def coarse_scenario():
    """Small, fast coupled scenario for structural tests (CFL ~ 0.3)."""
    return PistonScenario(n_cells=100, x_max=2.0, dt=4e-3, t_final=0.2, obs_interval=2e-2)
