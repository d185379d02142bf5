import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dualgate.models import Box, ModelSpec, drag_quadrotor, vector_drag_quadrotor
from dualgate.racing import CarParams, car_model, stadium_track


@pytest.fixture(scope="session")
def quad():
    return drag_quadrotor(true_cd=0.3, wbar=0.03)


@pytest.fixture(scope="session")
def vquad():
    return vector_drag_quadrotor(true_cd1=0.2, true_cd2=0.35, wbar=0.02)


@pytest.fixture(scope="session")
def car_params():
    return CarParams()


@pytest.fixture(scope="session")
def car(car_params):
    return car_model(car_params, true_mu=0.9, wbar=0.03)


@pytest.fixture(scope="session")
def track():
    return stadium_track(straight=15.0, radius=8.0, half_width=1.5)


@pytest.fixture(scope="session")
def decay_model():
    """Scalar dx/dt = -x with inert input/parameter channels."""
    return ModelSpec(
        "decay", 1, 1, 1,
        f0=lambda x: -x,
        g0=lambda x: np.zeros(x.shape[:-1] + (1, 1)),
        regressor=lambda x, u: np.zeros(x.shape[:-1] + (1, 1)),
        true_theta=np.array([0.0]),
        disturbance_bound=0.0,
        state_bounds=Box([-10.0], [10.0]),
        input_bounds=Box([-1.0], [1.0]),
    )
