import warnings

import numpy as np
import pytest

from hallforce import flexure
from hallforce.inverse.benchmark import reference_unit
from hallforce.magnetostatics import MagnetSpec, Shape
from hallforce.transducer import SensingUnitSpec, SensorSpec


@pytest.fixture(scope="session")
def materials():
    return flexure.load_materials()


@pytest.fixture(scope="session")
def steel_beam(materials):
    return flexure.BeamSpec(materials["steel"], 30e-3, 5e-3, 15e-3)


@pytest.fixture(scope="session")
def unit():
    return reference_unit()


@pytest.fixture(scope="session")
def sensor():
    return SensorSpec()


def make_unit(materials, material="steel", length=30e-3, thickness=5e-3, d=3e-3, ml=6e-3, gap=1.5e-3, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", flexure.SlenderBeamWarning)
        beam = flexure.BeamSpec(materials[material], length, thickness, 15e-3, kw.pop("cap", 0.5e-3))
    return SensingUnitSpec(beam, beam, MagnetSpec(Shape.CYLINDER, d, ml), gap, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[tuple[int, bool, str]] = []


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE.append((number, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
