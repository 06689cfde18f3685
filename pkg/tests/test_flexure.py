import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hallforce import flexure
from hallforce.errors import ConfigurationError, DomainError, SolverError
from hallforce.flexure import BeamSpec, MaterialSpec


def test_material_library(materials):
    assert set(materials) >= {"abs", "steel", "al7075"}
    assert materials["steel"].endurance_limit is not None
    assert materials["abs"].endurance_limit is None and materials["abs"].has_basquin


def test_material_library_rejects_unknown_keys(tmp_path):
    p = tmp_path / "m.yaml"
    p.write_text("materials:\n  - {name: x, youngs_modulus: 1.0e9, yield_strength: 1.0e6, colour: red}\n")
    with pytest.raises(ConfigurationError):
        flexure.load_materials(p)


def test_material_validation():
    with pytest.raises(ValueError):
        MaterialSpec("bad", -1.0, 1e6)
    with pytest.raises(ValueError):
        MaterialSpec("bad", 1e9, 1e6, fatigue_strength_coeff=1e7, fatigue_exponent=0.1)
    with pytest.raises(ValueError):
        MaterialSpec("bad", 1e9, 1e6, safety_factor=0.5)


def test_beam_validation(materials):
    with pytest.raises(ValueError):
        BeamSpec(materials["steel"], 30e-3, 0.0, 15e-3)
    with pytest.raises(ValueError):
        BeamSpec(materials["steel"], 30e-3, 1e-3, 15e-3, max_deflection_cap=-1e-3)
    with pytest.warns(flexure.SlenderBeamWarning):
        BeamSpec(materials["steel"], 10e-3, 3e-3, 15e-3)


def test_closed_forms_match_integration(materials, rng):
    for _ in range(20):
        mat = materials[rng.choice(["abs", "steel", "al7075"])]
        beam = BeamSpec(mat, rng.uniform(10e-3, 60e-3), rng.uniform(0.5e-3, 2e-3), rng.uniform(5e-3, 20e-3))
        P = rng.uniform(-500, 500)
        x, w, slope = flexure.integrate_bending(P, beam)
        assert slope[-1] == pytest.approx(flexure.tip_slope(P, beam), rel=1e-9)
        assert w[-1] == pytest.approx(flexure.tip_deflection(P, beam), rel=1e-9)
        assert np.allclose(w, flexure.deflection_profile(P, beam, x), rtol=1e-9, atol=1e-15)


def test_closed_form_identities(steel_beam):
    P = 37.0
    assert flexure.tip_deflection(P, steel_beam) == pytest.approx(P * steel_beam.compliance)
    assert flexure.load_for_deflection(flexure.tip_deflection(P, steel_beam), steel_beam) == pytest.approx(P)
    assert flexure.tip_slope(P, steel_beam) / flexure.tip_deflection(P, steel_beam) == pytest.approx(1.5 / steel_beam.length)


def test_thickness_doubling_divides_deflection_by_eight(materials):
    a = BeamSpec(materials["abs"], 40e-3, 1e-3, 15e-3)
    b = BeamSpec(materials["abs"], 40e-3, 2e-3, 15e-3)
    assert flexure.tip_deflection(5.0, a) / flexure.tip_deflection(5.0, b) == pytest.approx(8.0)


def test_bending_stress(steel_beam):
    P = 100.0
    root = flexure.bending_stress(steel_beam, P)
    assert root == pytest.approx(6 * P * steel_beam.length / (steel_beam.width * steel_beam.thickness**2))
    assert flexure.bending_stress(steel_beam, P, steel_beam.length) == 0.0
    with pytest.raises(DomainError):
        flexure.bending_stress(steel_beam, P, 2 * steel_beam.length)


def test_fatigue_endurance_limit(materials):
    steel = materials["steel"]
    limit = steel.endurance_limit / steel.safety_factor
    assert flexure.fatigue_admissible(limit, -limit, steel).admissible
    assert not flexure.fatigue_admissible(1.01 * limit, -1.01 * limit, steel).admissible
    assert flexure.fatigue_stress_limit(steel) == pytest.approx(limit)


def test_fatigue_basquin(materials):
    abs_ = materials["abs"]
    amp = flexure.fatigue_stress_limit(abs_, 1e7)
    assert flexure.basquin_life(amp, abs_) == pytest.approx(1e7, rel=1e-9)
    assert flexure.fatigue_admissible(0.99 * amp, -0.99 * amp, abs_).admissible
    assert not flexure.fatigue_admissible(1.01 * amp, -1.01 * amp, abs_).admissible
    assert flexure.fatigue_admissible(5e6, 5e6, abs_).cycles == math.inf
    with pytest.raises(ValueError):
        flexure.fatigue_admissible(-1.0, 1.0, abs_)
    with pytest.raises(ConfigurationError):
        flexure.fatigue_admissible(1.0, -1.0, MaterialSpec("bare", 1e9, 1e6))


@settings(max_examples=30, deadline=None)
@given(st.floats(1e6, 5e7), st.floats(1e6, 5e7))
def test_basquin_life_monotone(a, b):
    abs_ = flexure.load_materials()["abs"]
    lo, hi = sorted((a, b))
    assert flexure.basquin_life(lo, abs_) >= flexure.basquin_life(hi, abs_)


def test_von_karman_free_tip_is_linear(materials):
    beam = BeamSpec(materials["steel"], 30e-3, 2e-3, 15e-3)
    s = flexure.solve_von_karman(beam, 10.0, points=401)
    assert np.all(s.N == 0)
    assert s.tip_deflection == pytest.approx(flexure.tip_deflection(10.0, beam), rel=1e-5)
    assert s.tip_slope == pytest.approx(flexure.tip_slope(10.0, beam), rel=1e-4)
    assert s.u[-1] == pytest.approx(flexure.axial_shortening(s), rel=1e-3)
    assert s.u[-1] < 0


def test_von_karman_restraint_stiffens(materials):
    beam = BeamSpec(materials["steel"], 30e-3, 1e-3, 15e-3)
    P = 20.0
    lin = flexure.tip_deflection(P, beam)
    s = flexure.solve_von_karman(beam, P, axial_restraint=True)
    assert 0 < s.tip_deflection < lin
    assert np.all(s.N > 0)
    small = flexure.solve_von_karman(beam, 1e-3, axial_restraint=True)
    assert small.tip_deflection == pytest.approx(flexure.tip_deflection(1e-3, beam), rel=1e-4)


def test_von_karman_antisymmetric_in_load(materials):
    beam = BeamSpec(materials["steel"], 30e-3, 1e-3, 15e-3)
    a = flexure.solve_von_karman(beam, 15.0, axial_restraint=True)
    b = flexure.solve_von_karman(beam, -15.0, axial_restraint=True)
    assert np.allclose(a.w, -b.w, rtol=1e-9, atol=1e-15)


def test_von_karman_extra_distributed_load(materials):
    beam = BeamSpec(materials["steel"], 30e-3, 2e-3, 15e-3)
    q = 100.0
    s = flexure.solve_von_karman(beam, 0.0, q=lambda x: np.full_like(x, q), points=401)
    expect = q * beam.length**4 / (8 * beam.flexural_rigidity)
    assert s.tip_deflection == pytest.approx(expect, rel=1e-4)


def test_von_karman_errors(materials):
    beam = BeamSpec(materials["steel"], 30e-3, 1e-3, 15e-3)
    with pytest.raises(ValueError):
        flexure.solve_von_karman(beam, 1.0, points=50)
    with pytest.raises(ValueError):
        flexure.solve_von_karman(beam, 1.0, load="moment")
    with pytest.raises(SolverError):
        flexure.solve_von_karman(beam, 500.0, axial_restraint=True, max_iter=2)


def test_literal_stretching_mode_differs(materials):
    beam = BeamSpec(materials["steel"], 30e-3, 1e-3, 15e-3)
    a = flexure.solve_von_karman(beam, 5.0)
    b = flexure.solve_von_karman(beam, 5.0, paper_literal=True)
    assert np.allclose(a.w, b.w)
    assert not np.allclose(a.u, b.u)


def test_beam_state_is_immutable(materials):
    s = flexure.solve_von_karman(BeamSpec(materials["steel"], 30e-3, 2e-3, 15e-3), 1.0)
    with pytest.raises(ValueError):
        s.w[0] = 1.0
    with pytest.raises(ValueError):
        flexure.BeamState([0, 0], [0, 0], [0, 0], [0, 0], [0, 0], "tip")


def test_no_warning_for_slender_beam(materials):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        BeamSpec(materials["steel"], 45e-3, 4.5e-3, 15e-3)
