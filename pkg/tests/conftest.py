import sys
import numpy as np
import pytest

from fundom import fixtures
from fundom.geometry import EuclideanPlane, PoincareDisk, Window, cross_graph
from fundom.scene import window


@pytest.fixture(scope="session")
def plane():
    return EuclideanPlane()


@pytest.fixture(scope="session")
def disk():
    return PoincareDisk()


@pytest.fixture(scope="session")
def cross_space():
    return cross_graph()


@pytest.fixture(scope="session")
def torus():
    return fixtures.torus()


@pytest.fixture(scope="session")
def klein():
    return fixtures.klein()


@pytest.fixture(scope="session")
def schottky():
    return fixtures.schottky()


@pytest.fixture(scope="session")
def cross():
    return fixtures.cross()


@pytest.fixture(scope="session")
def ex1():
    return fixtures.ex1()


@pytest.fixture(scope="session")
def trivial():
    return fixtures.trivial()


def scene_window(name, radius=None):
    scene = fixtures.SCENES[name]()
    action = fixtures.load(name)
    return window(action.space, scene, radius)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def unit_window(center=(0.0, 0.0), radius=1.0):
    return Window(center, radius)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
