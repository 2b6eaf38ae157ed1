import numpy as np
import pytest

from pharmonic.schemas import HalfPlane, RunConfig, Sector, UnitDisk
from pharmonic.services import mesh as meshing
from pharmonic.services.fields import cached_pair


@pytest.fixture(scope="session")
def unit_disk():
    return UnitDisk(n=2)


@pytest.fixture(scope="session")
def unit_ball():
    return UnitDisk(n=3)


@pytest.fixture(scope="session")
def half_plane():
    return HalfPlane(n=2)


@pytest.fixture(scope="session")
def quarter_sector():
    return Sector(angle=0.5 * np.pi, radius=1.0)


@pytest.fixture(scope="session")
def pair():
    """Profiles are expensive to tabulate; share them across the session."""
    return cached_pair


@pytest.fixture(scope="session")
def coarse_disk_mesh():
    return meshing.mesh_disk(1.0, h=0.1)


@pytest.fixture
def run_config():
    return RunConfig(command="test", params={"p": 3.0, "k": 2}, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
