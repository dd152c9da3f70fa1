import numpy as np
import pytest

from periodrep.models import morris_lecar, predator_prey
from periodrep.observer import ObserverGains, compute_fundamental_matrix


@pytest.fixture(scope="session")
def gains():
    return ObserverGains.default()


@pytest.fixture(scope="session")
def pp_system():
    return predator_prey.predator_prey_system()


@pytest.fixture(scope="session")
def pp_rk4():
    """Prey and predator over one period, RK4 at dt = 0.001."""
    return predator_prey.pp_dataset(method="rk4")


@pytest.fixture(scope="session")
def pp_ie():
    """Same with improved Euler, the integrator behind the prey-error figure."""
    return predator_prey.pp_dataset(method="improved_euler")


@pytest.fixture(scope="session")
def pp_phi(pp_system, gains, pp_rk4):
    return compute_fundamental_matrix(pp_system, gains, pp_rk4[0])


@pytest.fixture(scope="session")
def ml_system():
    return morris_lecar.morris_lecar_system()


@pytest.fixture(scope="session")
def ml_data():
    return morris_lecar.ml_dataset()


@pytest.fixture(scope="session")
def ml_phi(ml_system, gains, ml_data):
    return compute_fundamental_matrix(ml_system, gains, ml_data.y, "dopri_fixed", 0.0002)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
