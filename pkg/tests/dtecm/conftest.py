import pytest

from dtecm.foliage import FoliageTwin
from dtecm.scene import Building, Scene, Vec3, load_scene
from dtecm.stochastic import load_state_params
from tests.data.fixtures import SCENE_PATH, patch_twin


@pytest.fixture(scope="session")
def campus_scene():
    yield load_scene(SCENE_PATH)


@pytest.fixture(scope="session")
def empty_scene():
    yield Scene((), Vec3(0.0, 0.0, 16.6), 220e9)


@pytest.fixture(scope="session")
def box_scene():
    """Four tall walls enclosing the point (0, 0)"""
    walls = [
        ((-10.0, -10.0), (10.0, -10.0), (10.0, -9.0), (-10.0, -9.0)),
        ((-10.0, 9.0), (10.0, 9.0), (10.0, 10.0), (-10.0, 10.0)),
        ((-10.0, -9.0), (-9.0, -9.0), (-9.0, 9.0), (-10.0, 9.0)),
        ((9.0, -9.0), (10.0, -9.0), (10.0, 9.0), (9.0, 9.0)),
    ]
    buildings = tuple(Building(w, 50.0) for w in walls)
    yield Scene(buildings, Vec3(100.0, 0.0, 16.6), 220e9)


@pytest.fixture(scope="session")
def clear_twin():
    yield FoliageTwin.uniform(False, 0.5)


@pytest.fixture(scope="session")
def foliage_twin():
    yield FoliageTwin.uniform(True, 0.5)


@pytest.fixture(scope="session")
def campus_twin():
    yield patch_twin()


@pytest.fixture(scope="session")
def params():
    yield load_state_params()
