import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hallforce.errors import DomainError
from hallforce.magnetostatics import (
    MU0,
    TESLA_TO_GAUSS,
    FieldVector,
    MagnetSpec,
    Pose,
    Shape,
    field,
    field_local,
    field_oracle,
    field_vector,
    interference_budget,
    rotation_x,
    rotation_y,
    sensitivity_profile,
    sensor_below,
)

CYL = MagnetSpec(Shape.CYLINDER, 2.5e-3, 2.5e-3)


def dipole(m, r):
    r = np.asarray(r, dtype=float)
    n = np.linalg.norm(r)
    return MU0 / (4 * np.pi) * (3 * r * (m @ r) / n**5 - m / n**3)


def test_magnet_spec_validation():
    with pytest.raises(ValueError):
        MagnetSpec(Shape.CYLINDER, -1e-3, 1e-3)
    with pytest.raises(ValueError):
        MagnetSpec(Shape.TUBE, 2e-3, 2e-3, inner_diameter=2e-3)
    with pytest.raises(ValueError):
        MagnetSpec(Shape.SPHERE, 2e-3, 3e-3)
    with pytest.raises(ValueError):
        MagnetSpec(Shape.CYLINDER, 2e-3, 2e-3, demag_multiplier=0.9)
    with pytest.raises(ValueError):
        MagnetSpec(Shape.CYLINDER, 2e-3, 2e-3, remanence=0.0)


def test_field_vector_gauss_and_rotation():
    v = FieldVector(1e-4, 0.0, -2e-4)
    assert np.allclose(v.gauss(), [1.0, 0.0, -2.0])
    R = rotation_x(0.3) @ rotation_y(-1.1)
    b = field(CYL, Pose([0, 0, 0], R), [1e-3, 2e-3, 4e-3])
    b_local = field_local(CYL, (np.array([1e-3, 2e-3, 4e-3])) @ R)
    assert np.allclose(b, R @ b_local, rtol=0, atol=1e-15)


def test_pose_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        Pose([0, 0, 0], np.diag([1.0, 1.0, 1.1]))
    with pytest.raises(ValueError):
        Pose([0, 0, 0], np.diag([1.0, 1.0, -1.0]))


def test_sphere_is_exact_dipole(rng):
    s = MagnetSpec(Shape.SPHERE, 3e-3, 3e-3)
    m = np.array([0.0, 0.0, s.remanence * s.volume / MU0])
    for _ in range(20):
        d = rng.normal(size=3)
        p = d / np.linalg.norm(d) * rng.uniform(1.6e-3, 10e-3)
        assert np.allclose(field_local(s, p), dipole(m, p), rtol=1e-12, atol=0)


def test_cylinder_on_axis_closed_form():
    br, r, L, z = CYL.remanence, CYL.diameter / 2, CYL.length, 1.5e-3
    expect = br / 2 * ((z + L) / np.hypot(z + L, r) - z / np.hypot(z, r))
    b = field_local(CYL, [0.0, 0.0, L / 2 + z])
    assert b[0] == 0 and b[1] == 0
    assert b[2] == pytest.approx(expect, rel=1e-12)
    assert field_oracle(CYL, [0.0, 0.0, L / 2 + z]).bz == pytest.approx(expect, rel=1e-9)


def test_tube_is_superposition(rng):
    tube = MagnetSpec(Shape.TUBE, 2.5e-3, 2.5e-3, inner_diameter=1e-3)
    inner = MagnetSpec(Shape.CYLINDER, 1e-3, 2.5e-3)
    for _ in range(10):
        p = rng.uniform(-6e-3, 6e-3, 3)
        p[2] = abs(p[2]) + 2e-3
        assert np.allclose(field_local(tube, p), field_local(CYL, p) - field_local(inner, p), rtol=0, atol=1e-15)


@pytest.mark.parametrize("shape", list(Shape))
def test_far_field_matches_dipole(shape):
    m = MagnetSpec(shape, 2.5e-3, 2.5e-3, inner_diameter=1e-3 if shape is Shape.TUBE else 0.0)
    p = np.array([0.3, -0.5, 0.8])
    p = p / np.linalg.norm(p) * 10 * m.diameter
    mom = np.array([0.0, 0.0, m.remanence * m.volume / MU0])
    b = field_local(m, p)
    assert np.linalg.norm(b - dipole(mom, p)) / np.linalg.norm(b) < 0.05


@pytest.mark.parametrize("shape", [Shape.CYLINDER, Shape.CUBE, Shape.TUBE])
def test_oracle_agrees_at_sample_points(shape, rng):
    m = MagnetSpec(shape, 3e-3, 2e-3, inner_diameter=1e-3 if shape is Shape.TUBE else 0.0)
    for _ in range(4):
        p = rng.normal(size=3)
        p = p / np.linalg.norm(p) * rng.uniform(3e-3, 6e-3)
        a = field_local(m, p)
        o = field_oracle(m, p).as_array()
        assert np.linalg.norm(a - o) / np.linalg.norm(o) < 1e-6


def test_inside_or_on_surface_is_domain_error():
    with pytest.raises(DomainError):
        field_local(CYL, [0.0, 0.0, 0.0])
    with pytest.raises(DomainError):
        field_local(CYL, [0.0, 0.0, CYL.length / 2])
    with pytest.raises(ValueError):
        field_local(CYL, [np.nan, 0.0, 1.0])


def test_parity_about_axis():
    x = 0.4e-3
    z = -(CYL.length / 2 + 1.5e-3)
    bp = field_local(CYL, [x, 0.0, z])
    bm = field_local(CYL, [-x, 0.0, z])
    assert bp[0] == pytest.approx(-bm[0], rel=1e-12)
    assert bp[2] == pytest.approx(bm[2], rel=1e-12)


def test_superposition_of_two_sources(rng):
    a = Pose([0, 0, 0])
    b = Pose([4e-3, 0, 0], rotation_y(0.4))
    p = np.array([1e-3, 3e-3, 5e-3])
    total = field(CYL, a, p) + field(CYL, b, p)
    both = field_vector(CYL, a, p).as_array() + field_vector(CYL, b, p).as_array()
    assert np.allclose(total, both, rtol=0, atol=1e-12 * np.abs(total).max())


@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(0.99, 1.0))
def test_linear_in_remanence_and_demag(scale, demag):
    base = MagnetSpec(Shape.CUBE, 2e-3, 3e-3, remanence=1.0)
    other = MagnetSpec(Shape.CUBE, 2e-3, 3e-3, remanence=scale, demag_multiplier=demag)
    p = [0.5e-3, -1e-3, 3.5e-3]
    assert np.allclose(field_local(other, p), scale * demag * field_local(base, p), rtol=1e-12)


def test_sensitivity_profile_axisymmetric_and_linear():
    sensor = sensor_below(CYL, 1.5e-3)
    px = sensitivity_profile(CYL, sensor, "x", (-0.3e-3, 0.3e-3), 7)
    py = sensitivity_profile(CYL, sensor, "y", (-0.3e-3, 0.3e-3), 7)
    assert np.allclose(np.abs(px.sensitivity[:, 0]), np.abs(py.sensitivity[:, 1]), rtol=1e-6)
    strong = MagnetSpec(Shape.CYLINDER, 2.5e-3, 2.5e-3, remanence=2 * CYL.remanence)
    p2 = sensitivity_profile(strong, sensor, "x", (-0.3e-3, 0.3e-3), 7)
    assert np.allclose(p2.sensitivity, 2 * px.sensitivity, rtol=1e-9, atol=1e-9)
    assert px.max_abs[0] == np.max(np.abs(px.sensitivity[:, 0]))


def test_sensitivity_profile_errors():
    sensor = sensor_below(CYL, 0.5e-3)
    with pytest.raises(DomainError):
        sensitivity_profile(CYL, sensor, "z", (-1e-3, 1e-3), 5)
    with pytest.raises(ValueError):
        sensitivity_profile(CYL, sensor, "x", (-1e-3, 1e-3), 2)


def test_large_magnet_sensitivity_is_nearly_flat():
    m = MagnetSpec(Shape.CYLINDER, 5e-3, 5e-3)
    p = sensitivity_profile(m, sensor_below(m, 1.5e-3), "x", (-0.6e-3, 0.6e-3), 13)
    s = p.sensitivity[:, 0]
    spread = (s.max() - s.min()) / np.abs(s).max()
    small = MagnetSpec(Shape.CYLINDER, 2e-3, 2e-3)
    q = sensitivity_profile(small, sensor_below(small, 1.5e-3), "x", (-0.6e-3, 0.6e-3), 13).sensitivity[:, 0]
    assert spread < 0.1
    assert spread < (q.max() - q.min()) / np.abs(q).max()


def test_interference_budget_terms(unit):
    rep = interference_budget(unit, 1.5e-3, 0.0, 1, seed=0)
    assert rep.misalignment_spread == (0.0, 0.0, 0.0)
    assert rep.earth_offset.bz == pytest.approx(0.5e-6)
    assert rep.neighbor_lateral_gauss < 1e-9
    far = interference_budget(unit, 1.0, 0.0, 1, seed=0)
    assert far.neighbor_gauss < 1e-3 * rep.neighbor_gauss
    nominal = field(unit.magnet, unit.magnet_pose(), unit.sensor_pose().translation)
    assert rep.demag_delta.bz == pytest.approx(0.01 * nominal[2], rel=1e-9)
    with pytest.raises(ValueError):
        interference_budget(unit, 0.0, 0.0, 1, seed=0)


def test_interference_monte_carlo_is_seeded(unit):
    a = interference_budget(unit, 1.5e-3, 50e-6, 16, seed=7)
    b = interference_budget(unit, 1.5e-3, 50e-6, 16, seed=7)
    c = interference_budget(unit, 1.5e-3, 50e-6, 16, seed=8)
    assert a.misalignment_spread == b.misalignment_spread
    assert a.misalignment_spread != c.misalignment_spread
    assert min(a.misalignment_spread) > 0
    assert TESLA_TO_GAUSS == 1e4
