import numpy as np
import pytest

from latticegas import Interaction, MobilityModel, ZERO_INTERACTION, free_energy_table
from latticegas.transport import diffusion_model


@pytest.fixture(scope="session")
def thermo_free():
    return free_energy_table(ZERO_INTERACTION)


@pytest.fixture(scope="session")
def thermo_j05():
    return free_energy_table(Interaction(0.5), npoints=1024)


@pytest.fixture(scope="session")
def ssep_mobility():
    return MobilityModel("ssep")


@pytest.fixture(scope="session")
def ssep_D(ssep_mobility, thermo_free):
    return diffusion_model(ssep_mobility, thermo_free)


@pytest.fixture()
def rng():
    return np.random.default_rng(1729)
