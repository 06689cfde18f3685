"""Force -> deflection -> field -> counts for one finger-edge sensing unit.

Geometry, in the sensor frame:

* the 3-axis sensor sits at the origin on the lateral flexure, whose tip
  moves along +x under the lateral force ``F_x``;
* the magnet is centered on the sensor z axis with its near face ``gap``
  above the sensor, magnetized along +z, and rides the longitudinal flexure,
  whose tip moves along +y and tilts about x under ``F_z``.

Both loads act at the flexure tips. Mounting offsets are applied on top of
this nominal placement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import NamedTuple, Sequence

import numpy as np

from . import flexure
from .flexure import BeamSpec
from .magnetostatics import (
    TESLA_TO_GAUSS,
    MagnetSpec,
    Pose,
    field,
    field_local,
    neighbor_pose,
    rotation_x,
)

MIN_GAP = 1.5e-3
CLOSED_GRIPPER_GAP = 1.5e-3
CONSTRAINTS = ("yield", "fatigue", "geometric", "signal_range", "interference")


@dataclass(frozen=True)
class SensorSpec:
    range: float = 2000.0
    resolution: float = 0.1
    noise_sigma: float = 0.1
    sample_rate: float = 1000.0

    def __post_init__(self):
        if not self.range > 0:
            raise ValueError("sensor range must be positive")
        if not self.resolution > 0:
            raise ValueError("sensor resolution must be positive")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be non-negative")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")

    @property
    def max_counts(self) -> int:
        return int(math.floor(self.range / self.resolution + 1e-9))


@dataclass(frozen=True)
class SensingUnitSpec:
    lateral_beam: BeamSpec
    longitudinal_beam: BeamSpec
    magnet: MagnetSpec
    gap: float = MIN_GAP
    sensor_offset: Pose = dc_field(default_factory=Pose)
    magnet_offset: Pose = dc_field(default_factory=Pose)
    allow_small_gap: bool = False
    include_tilt: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.gap) and self.gap > 0):
            raise ValueError("gap must be positive")
        if self.gap < MIN_GAP - 1e-12 and not self.allow_small_gap:
            raise ValueError(f"gap {self.gap:.4g} m is below the {MIN_GAP} m minimum; set allow_small_gap to override")

    def sensor_pose(self, dx: float = 0.0) -> Pose:
        return Pose(self.sensor_offset.translation + np.array([dx, 0.0, 0.0]), self.sensor_offset.rotation)

    def magnet_pose(self, dy: float = 0.0, tilt: float = 0.0) -> Pose:
        nominal = np.array([0.0, dy, self.gap + self.magnet.length / 2])
        rot = self.magnet_offset.rotation @ rotation_x(-tilt)
        return Pose(self.magnet_offset.translation + nominal, rot)


class AxisPair(NamedTuple):
    x: float
    z: float


@dataclass(frozen=True, eq=False)
class SensorReading:
    """Quantized reading; arrays are ``(3,)`` or ``(n, 3)``."""

    counts: np.ndarray
    gauss: np.ndarray
    saturated: np.ndarray

    @property
    def any_saturated(self) -> bool:
        return bool(np.any(self.saturated))


# ---------------------------------------------------------------------------
# forward chain


def displacements(unit: SensingUnitSpec, fx, fz):
    """Sensor x travel, magnet y travel and magnet tilt for tip loads."""
    fx = np.asarray(fx, dtype=float)
    fz = np.asarray(fz, dtype=float)
    dx = fx * unit.lateral_beam.compliance
    dy = fz * unit.longitudinal_beam.compliance
    tilt = flexure.tip_slope(fz, unit.longitudinal_beam) if unit.include_tilt else np.zeros_like(dy)
    return dx, dy, tilt


def tilt_for_deflection(unit: SensingUnitSpec, dy):
    """Tip slope that accompanies a tip deflection ``dy`` (3 dy / 2L)."""
    if not unit.include_tilt:
        return np.zeros_like(np.asarray(dy, dtype=float))
    return 1.5 * np.asarray(dy, dtype=float) / unit.longitudinal_beam.length


def field_at_sensor(unit: SensingUnitSpec, dx, dy, tilt, check: bool = True) -> np.ndarray:
    """Flux density (tesla) in the sensor frame for arrays of displacements."""
    dx, dy, tilt = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (dx, dy, tilt)))
    shape = dx.shape
    dx, dy, tilt = dx.ravel(), dy.ravel(), tilt.ravel()
    sensor_pt = unit.sensor_offset.translation + np.stack([dx, np.zeros_like(dx), np.zeros_like(dx)], axis=-1)
    centre = unit.magnet_offset.translation + np.array([0.0, 0.0, unit.gap + unit.magnet.length / 2])
    d = sensor_pt - centre - np.stack([np.zeros_like(dy), dy, np.zeros_like(dy)], axis=-1)
    d = d @ unit.magnet_offset.rotation
    # undo the per-sample tilt R_x(-tilt)
    c, s = np.cos(tilt), np.sin(tilt)
    local = np.stack([d[:, 0], c * d[:, 1] - s * d[:, 2], s * d[:, 1] + c * d[:, 2]], axis=-1)
    b = field_local(unit.magnet, local, check=check)
    b = np.stack([b[:, 0], c * b[:, 1] + s * b[:, 2], -s * b[:, 1] + c * b[:, 2]], axis=-1)
    b = b @ unit.magnet_offset.rotation.T @ unit.sensor_offset.rotation
    return b.reshape(shape + (3,))


def quantize(B, sensor: SensorSpec) -> SensorReading:
    """Round to the resolution grid, half away from zero, clamping at range.

    ``B`` is a :class:`FieldVector` or an array in tesla. A 1e-9 step
    tolerance absorbs binary representation error at exact half steps.
    """
    if hasattr(B, "as_array"):
        B = B.as_array()
    g = np.asarray(B, dtype=float) * TESLA_TO_GAUSS
    if not np.all(np.isfinite(g)):
        raise ValueError("field must be finite")
    ratio = np.abs(g) / sensor.resolution
    counts = np.sign(g) * np.floor(ratio + 0.5 + 1e-9)
    limit = sensor.max_counts
    saturated = (np.abs(counts) > limit) | (np.abs(g) > sensor.range)
    counts = np.clip(counts, -limit, limit).astype(np.int64)
    return SensorReading(counts, counts * sensor.resolution, saturated)


def readings(unit: SensingUnitSpec, fx, fz, sensor: SensorSpec, rng=None, external=None) -> SensorReading:
    """Vectorized forward chain for arrays of forces."""
    dx, dy, tilt = displacements(unit, fx, fz)
    b = field_at_sensor(unit, dx, dy, tilt)
    if external is not None:
        b = b + external
    if rng is not None and sensor.noise_sigma > 0:
        b = b + rng.normal(0.0, sensor.noise_sigma / TESLA_TO_GAUSS, b.shape)
    return quantize(b, sensor)


def forward_reading(unit: SensingUnitSpec, F: Sequence[float], sensor: SensorSpec, noise_seed=None) -> SensorReading:
    """Reading for the 2-axis load ``F = (F_x, F_z)`` in newtons.

    Without ``noise_seed`` the result is noiseless and deterministic.
    Saturation is flagged, not raised.
    """
    fx, fz = (float(v) for v in F)
    if not (np.isfinite(fx) and np.isfinite(fz)):
        raise ValueError("force must be finite")
    rng = None if noise_seed is None else np.random.default_rng(noise_seed)
    return readings(unit, fx, fz, sensor, rng=rng)


def nominal_field(unit: SensingUnitSpec) -> np.ndarray:
    return field_at_sensor(unit, 0.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# sensitivity


def field_gradient(unit: SensingUnitSpec, step: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """dB/d(sensor x) and dB/d(magnet y) at nominal, tesla/meter.

    Both are taken as magnet motion relative to the sensor, so the lateral
    derivative flips sign with the sensor's own travel.
    """
    bx = field_at_sensor(unit, np.array([step, -step]), 0.0, 0.0)
    by = field_at_sensor(unit, 0.0, np.array([step, -step]), 0.0)
    return -(bx[0] - bx[1]) / (2 * step), (by[0] - by[1]) / (2 * step)


def magnetic_sensitivity(unit: SensingUnitSpec) -> AxisPair:
    """|dB_x/dx| and |dB_y/dy| at nominal, gauss/meter."""
    gx, gy = field_gradient(unit)
    return AxisPair(abs(gx[0]) * TESLA_TO_GAUSS, abs(gy[1]) * TESLA_TO_GAUSS)


def force_sensitivity(unit: SensingUnitSpec) -> AxisPair:
    """Gauss per newton per axis: field sensitivity times beam compliance."""
    s = magnetic_sensitivity(unit)
    return AxisPair(s.x * unit.lateral_beam.compliance, s.z * unit.longitudinal_beam.compliance)


# ---------------------------------------------------------------------------
# constraints


@dataclass(frozen=True)
class FeasibilityReport:
    yield_ok: bool
    fatigue_ok: bool
    geometric_ok: bool
    signal_range_ok: bool
    interference_ok: bool
    binding_constraint: str
    margins: dict

    @property
    def feasible(self) -> bool:
        return self.yield_ok and self.fatigue_ok and self.geometric_ok and self.signal_range_ok and self.interference_ok

    def flags(self) -> dict:
        return {name: getattr(self, f"{name}_ok") for name in CONSTRAINTS}


def neighbor_offset(unit: SensingUnitSpec, closed_gap: float = CLOSED_GRIPPER_GAP) -> np.ndarray:
    """Closed-gripper field of the facing unit's magnet at the sensor (tesla)."""
    sensor = unit.sensor_pose()
    pose = neighbor_pose(unit.magnet, unit.magnet_pose(), closed_gap)
    return field(unit.magnet, pose, sensor.translation) @ sensor.rotation


def _beam_margins(beam: BeamSpec, force: float, stress_ratio: float, life: float) -> tuple[float, float, float]:
    sigma = abs(flexure.bending_stress(beam, force, 0.0))
    mat = beam.material
    m_yield = 1.0 - sigma * mat.safety_factor / mat.yield_strength
    lo = min(stress_ratio * sigma, sigma)
    fat = flexure.fatigue_admissible(sigma, lo, mat, life)
    allow = flexure.fatigue_stress_limit(mat, life)
    m_fat = 1.0 - fat.amplitude / allow
    # keep the margin sign consistent with the screen at the boundary
    if fat.admissible:
        m_fat = max(m_fat, 0.0)
    elif m_fat >= 0:
        m_fat = -1e-15
    delta = abs(flexure.tip_deflection(force, beam))
    cap = beam.max_deflection_cap
    if cap > 0:
        m_geo = 1.0 - delta / cap
    else:
        m_geo = 0.0 if delta == 0 else -math.inf
    return m_yield, m_fat, m_geo


def check_constraints(
    unit: SensingUnitSpec,
    sensor: SensorSpec,
    F: Sequence[float] = (0.0, 0.0),
    *,
    stress_ratio: float = -1.0,
    life_threshold: float = flexure.DEFAULT_LIFE_CYCLES,
    closed_gap: float = CLOSED_GRIPPER_GAP,
    interference_resolutions: float = 3.0,
) -> FeasibilityReport:
    """Evaluate all five constraint families at load ``F = (F_x, F_z)``.

    ``stress_ratio`` is sigma_min / sigma_max of the load cycle (-1: fully
    reversed). The interference check compares the in-plane part of the
    closed-gripper neighbor offset against ``interference_resolutions``
    sensor steps.
    """
    fx, fz = (float(v) for v in F)
    my = []
    mf = []
    mg = []
    for beam, force in ((unit.lateral_beam, fx), (unit.longitudinal_beam, fz)):
        a, b, c = _beam_margins(beam, force, stress_ratio, life_threshold)
        my.append(a)
        mf.append(b)
        mg.append(c)
    geo = min(mg)
    if unit.gap < MIN_GAP - 1e-12 and not unit.allow_small_gap:
        geo = min(geo, unit.gap / MIN_GAP - 1.0)
    margins = {"yield": min(my), "fatigue": min(mf), "geometric": geo}
    dx, dy, tilt = displacements(unit, fx, fz)
    try:
        b = field_at_sensor(unit, dx, dy, tilt)
        margins["signal_range"] = 1.0 - float(np.max(np.abs(b))) * TESLA_TO_GAUSS / sensor.range
    except ValueError:
        margins["signal_range"] = -math.inf
    lateral = float(np.hypot(*neighbor_offset(unit, closed_gap)[:2])) * TESLA_TO_GAUSS
    margins["interference"] = 1.0 - lateral / (interference_resolutions * sensor.resolution)
    ok = {k: margins[k] >= 0 for k in margins}
    ok["interference"] = margins["interference"] > 0
    binding = min(CONSTRAINTS, key=lambda k: margins[k])
    return FeasibilityReport(
        yield_ok=ok["yield"],
        fatigue_ok=ok["fatigue"],
        geometric_ok=ok["geometric"],
        signal_range_ok=ok["signal_range"],
        interference_ok=ok["interference"],
        binding_constraint=binding,
        margins=margins,
    )


# ---------------------------------------------------------------------------
# force range


@dataclass(frozen=True)
class ForceRange:
    x: float
    z: float
    binding_x: str
    binding_z: str

    def as_pair(self) -> AxisPair:
        return AxisPair(self.x, self.z)


def _mechanical_limits(beams: Sequence[BeamSpec], stress_ratio: float, life: float) -> dict:
    """Per-beam load at which each mechanical screen binds (newtons)."""
    out = {"yield": [], "fatigue": [], "geometric": []}
    amp_per_stress = (1.0 - max(min(stress_ratio, 1.0), -1.0)) / 2.0
    for beam in beams:
        per_newton = beam.length * (beam.thickness / 2) / beam.second_moment
        mat = beam.material
        out["yield"].append(mat.yield_strength / mat.safety_factor / per_newton)
        allow = flexure.fatigue_stress_limit(mat, life)
        out["fatigue"].append(allow / (amp_per_stress * per_newton) if amp_per_stress > 0 else math.inf)
        out["geometric"].append(beam.max_deflection_cap / beam.compliance)
    return {k: np.array(v) for k, v in out.items()}


def _signal_violation(units, axis, forces, sensor):
    """True where +/-force along ``axis`` saturates the sensor."""
    bad = np.zeros(len(units), dtype=bool)
    groups = {}
    for i, u in enumerate(units):
        groups.setdefault((u.magnet, u.gap, u.sensor_offset, u.magnet_offset, u.include_tilt), []).append(i)
    for idx in groups.values():
        idx = np.asarray(idx)
        u0 = units[idx[0]]
        f = forces[idx]
        if axis == "x":
            comp = np.array([units[i].lateral_beam.compliance for i in idx])
            dx = np.concatenate([f * comp, -f * comp])
            dy = np.zeros_like(dx)
            tilt = np.zeros_like(dx)
        else:
            comp = np.array([units[i].longitudinal_beam.compliance for i in idx])
            lengths = np.array([units[i].longitudinal_beam.length for i in idx])
            dy = np.concatenate([f * comp, -f * comp])
            dx = np.zeros_like(dy)
            tilt = 1.5 * dy / np.concatenate([lengths, lengths]) if u0.include_tilt else np.zeros_like(dy)
        try:
            b = field_at_sensor(u0, dx, dy, tilt)
            over = np.max(np.abs(b), axis=-1) * TESLA_TO_GAUSS > sensor.range
        except ValueError:
            over = np.ones(dx.shape, dtype=bool)
        n = len(idx)
        bad[idx] = over[:n] | over[n:]
    return bad


def force_range_batch(
    units: Sequence[SensingUnitSpec],
    sensor: SensorSpec,
    *,
    stress_ratio: float = -1.0,
    life_threshold: float = flexure.DEFAULT_LIFE_CYCLES,
    abs_tol: float = 1e-3,
    rel_tol: float = 1e-7,
) -> list[ForceRange]:
    """Bisect each axis load until the first of yield, fatigue, deflection
    cap or sensor saturation binds. Loads are screened at +F and -F.

    Terminates when the bracket is below both ``abs_tol`` newtons and
    ``rel_tol`` of the load, so ``F * (1 + 1e-6)`` is already inadmissible.
    """
    units = list(units)
    n = len(units)
    results = {}
    for axis in ("x", "z"):
        beams = [u.lateral_beam if axis == "x" else u.longitudinal_beam for u in units]
        limits = _mechanical_limits(beams, stress_ratio, life_threshold)
        mech = np.minimum(np.minimum(limits["yield"], limits["fatigue"]), limits["geometric"])

        def violated(forces):
            out = {k: forces > limits[k] for k in ("yield", "fatigue", "geometric")}
            out["signal_range"] = _signal_violation(units, axis, forces, sensor)
            return out

        zero = violated(np.zeros(n))
        infeasible0 = np.any(np.stack(list(zero.values())), axis=0)
        lo = np.zeros(n)
        hi = np.where(np.isfinite(mech), 2.0 * mech + 1.0, 1e7)
        active = ~infeasible0
        for _ in range(200):
            width = hi - lo
            done = (width <= np.minimum(abs_tol, rel_tol * lo)) | ((lo == 0) & (hi <= 1e-9))
            active &= ~done
            if not np.any(active):
                break
            mid = np.where(active, 0.5 * (lo + hi), lo)
            v = violated(mid)
            bad = np.any(np.stack(list(v.values())), axis=0)
            hi = np.where(active & bad, mid, hi)
            lo = np.where(active & ~bad, mid, lo)
        at_hi = violated(np.where(infeasible0, 0.0, hi))
        binding = []
        for i in range(n):
            names = [k for k in ("yield", "fatigue", "geometric", "signal_range") if at_hi[k][i]]
            if not names:
                names = ["geometric"]
            if len(names) > 1:
                # several bind in the same bracket: report the smallest limit
                lim = {k: (limits[k][i] if k in limits else lo[i]) for k in names}
                names = sorted(names, key=lambda k: lim[k])
            binding.append(names[0])
        val = np.where(infeasible0, 0.0, lo)
        val = np.where(val <= 1e-9, 0.0, val)
        results[axis] = (val, binding)
    return [
        ForceRange(float(results["x"][0][i]), float(results["z"][0][i]), results["x"][1][i], results["z"][1][i])
        for i in range(n)
    ]


def force_range(unit: SensingUnitSpec, sensor: SensorSpec, **kw) -> ForceRange:
    """Maximum admissible load per axis and the constraint that binds."""
    return force_range_batch([unit], sensor, **kw)[0]


def admissible(unit: SensingUnitSpec, sensor: SensorSpec, axis: str, force: float, **kw) -> bool:
    """Mechanical and signal screens for a single-axis load at +/-force."""
    F = (force, 0.0) if axis == "x" else (0.0, force)
    Fm = (-F[0], -F[1])
    keys = ("yield", "fatigue", "geometric", "signal_range")
    for load in (F, Fm):
        rep = check_constraints(unit, sensor, load, **kw)
        if not all(rep.flags()[k] for k in keys):
            return False
    return True
