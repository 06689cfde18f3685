"""Analytic exterior fields of uniformly magnetized permanent magnets.

All magnets are magnetized along their local +z axis and centered on their
local origin. Lengths are in meters, flux density in tesla.

Shapes
------
cylinder : closed form in cylindrical coordinates using Bulirsch's
    generalized complete elliptic integral.
cube : rectangular prism ``diameter x diameter x length`` from the two
    charged pole faces, integrated in closed form.
sphere : exact point dipole outside the body.
tube : outer cylinder minus coaxial inner cylinder with equal remanence.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field as dc_field, replace

import numpy as np
from scipy.integrate import quad_vec

from .errors import DomainError, OracleError

MU0 = 4e-7 * np.pi
TESLA_TO_GAUSS = 1e4
SURFACE_CLEARANCE = 1e-6
EARTH_FIELD_T = 0.5e-6


class Shape(str, enum.Enum):
    CYLINDER = "cylinder"
    CUBE = "cube"
    SPHERE = "sphere"
    TUBE = "tube"


@dataclass(frozen=True)
class MagnetSpec:
    shape: Shape
    diameter: float
    length: float
    remanence: float = 1.2
    inner_diameter: float = 0.0
    demag_multiplier: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "shape", Shape(self.shape))
        vals = (self.diameter, self.length, self.remanence, self.inner_diameter, self.demag_multiplier)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("magnet parameters must be finite")
        if self.diameter <= 0 or self.length <= 0:
            raise ValueError("magnet dimensions must be positive")
        if self.remanence <= 0:
            raise ValueError("remanence must be positive")
        if not 0.99 <= self.demag_multiplier <= 1.0:
            raise ValueError("demag_multiplier must lie in [0.99, 1.0]")
        if self.shape is Shape.TUBE:
            if not 0 < self.inner_diameter < self.diameter:
                raise ValueError("tube needs 0 < inner_diameter < diameter")
        elif self.inner_diameter != 0:
            raise ValueError("inner_diameter is only meaningful for tubes")
        if self.shape is Shape.SPHERE and not np.isclose(self.length, self.diameter, rtol=0, atol=1e-15):
            raise ValueError("sphere requires length == diameter")

    @property
    def effective_remanence(self) -> float:
        return self.remanence * self.demag_multiplier

    @property
    def volume(self) -> float:
        r = self.diameter / 2
        if self.shape is Shape.CYLINDER:
            return np.pi * r**2 * self.length
        if self.shape is Shape.TUBE:
            return np.pi * (r**2 - (self.inner_diameter / 2) ** 2) * self.length
        if self.shape is Shape.CUBE:
            return self.diameter**2 * self.length
        return 4.0 / 3.0 * np.pi * r**3

    @property
    def moment(self) -> float:
        """Dipole moment magnitude in A m^2."""
        return self.effective_remanence * self.volume / MU0


@dataclass(frozen=True)
class FieldVector:
    bx: float
    by: float
    bz: float

    @classmethod
    def from_array(cls, b) -> "FieldVector":
        b = np.asarray(b, dtype=float).reshape(3)
        if not np.all(np.isfinite(b)):
            raise ValueError("field components must be finite")
        return cls(float(b[0]), float(b[1]), float(b[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.bx, self.by, self.bz])

    def gauss(self) -> np.ndarray:
        return self.as_array() * TESLA_TO_GAUSS

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform taking local coordinates into the parent frame."""

    translation: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = dc_field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        t = np.array(self.translation, dtype=float).reshape(3)
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(r))):
            raise ValueError("pose must be finite")
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-12 or np.linalg.det(r) < 0:
            raise ValueError("rotation must be orthonormal with det +1")
        t.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", r)

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.translation, other.translation) and np.array_equal(self.rotation, other.rotation)

    def __hash__(self):
        return hash((self.translation.tobytes(), self.rotation.tobytes()))

    def to_local(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.translation) @ self.rotation

    def to_parent(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def compose(self, other: "Pose") -> "Pose":
        """``self`` applied after ``other``."""
        return Pose(self.rotation @ other.translation + self.translation, self.rotation @ other.rotation)

    def translated(self, offset) -> "Pose":
        return Pose(self.translation + np.asarray(offset, dtype=float), self.rotation)


def rotation_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


# ---------------------------------------------------------------------------
# closed-form kernels


def _cel(kc, p, c, s, tol=1e-15, max_iter=60):
    """Bulirsch's generalized complete elliptic integral, vectorized.

    Only the ``p > 0`` branch and ``p == 0`` limit are needed here.
    """
    kc, p, c, s = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (kc, p, c, s)))
    k = np.abs(kc)
    pos = p > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        pp_pos = np.sqrt(np.where(pos, p, 1.0))
        ss_pos = s / pp_pos
        # p <= 0 branch of the published algorithm
        f = kc * kc
        q = 1.0 - f
        g = 1.0 - p
        f = f - p
        q = q * (s - c * p)
        pp_neg = np.sqrt(np.where(pos, 1.0, f / g))
        cc_neg = (c - s) / g
        ss_neg = -q / (g * g * pp_neg) + cc_neg * pp_neg
    pp = np.where(pos, pp_pos, pp_neg)
    cc = np.where(pos, c, cc_neg)
    ss = np.where(pos, ss_pos, ss_neg)

    em = np.ones_like(k)
    f = cc
    cc = cc + ss / pp
    g = k / pp
    ss = 2.0 * (ss + f * g)
    pp = g + pp
    g = em
    em = k + em
    kk = k
    for _ in range(max_iter):
        if np.all(np.abs(g - k) <= g * tol):
            break
        k = 2.0 * np.sqrt(kk)
        kk = k * em
        f = cc
        cc = cc + ss / pp
        g = kk / pp
        ss = 2.0 * (ss + f * g)
        pp = g + pp
        g = em
        em = k + em
    return 0.5 * np.pi * (ss + cc * em) / (em * (em + pp))


def _cylinder_local(radius, half_length, br, pts):
    """Field of an axially magnetized solid cylinder (all space)."""
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    rho = np.hypot(x, y)
    a = radius
    b0 = br / np.pi
    gamma = (a - rho) / (a + rho)
    b_rho = np.zeros_like(rho)
    b_z = np.zeros_like(rho)
    for sign, zs in ((1.0, z + half_length), (-1.0, z - half_length)):
        denom = np.sqrt(zs**2 + (rho + a) ** 2)
        alpha = a / denom
        beta = zs / denom
        kc = np.sqrt(zs**2 + (a - rho) ** 2) / denom
        b_rho += sign * alpha * _cel(kc, 1.0, 1.0, -1.0)
        b_z += sign * beta * _cel(kc, gamma**2, 1.0, gamma)
    b_rho *= b0
    b_z *= b0 * a / (a + rho)
    with np.errstate(invalid="ignore", divide="ignore"):
        cphi = np.where(rho > 0, x / rho, 0.0)
        sphi = np.where(rho > 0, y / rho, 0.0)
    return np.stack([b_rho * cphi, b_rho * sphi, b_z], axis=-1)


def _log_y_plus_r(y, r, rest2):
    # ln(Y + R), rewritten for Y < 0 where Y + R cancels
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(y >= 0, np.log(y + r), np.log(rest2 / (r - y)))


def _prism_local(hx, hy, hz, br, pts):
    """Field of a z-magnetized prism with half sides ``hx, hy, hz``."""
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    out = np.zeros(pts.shape, dtype=float)
    for face_sign, z0 in ((1.0, hz), (-1.0, -hz)):
        zz = z - z0
        for i, xc in enumerate((-hx, hx)):
            for j, yc in enumerate((-hy, hy)):
                corner = face_sign * (1.0 if i == j else -1.0)
                xx = x - xc
                yy = y - yc
                r = np.sqrt(xx**2 + yy**2 + zz**2)
                fx = -_log_y_plus_r(yy, r, xx**2 + zz**2)
                fy = -_log_y_plus_r(xx, r, yy**2 + zz**2)
                with np.errstate(divide="ignore", invalid="ignore"):
                    fz = np.where(zz != 0, np.arctan(xx * yy / (zz * r)), 0.0)
                out[..., 0] += corner * fx
                out[..., 1] += corner * fy
                out[..., 2] += corner * fz
    return out * br / (4 * np.pi)


def _dipole_local(moment_t_m3, pts):
    """Point dipole along +z; ``moment_t_m3`` is mu0 * m in T m^3."""
    r2 = np.sum(pts**2, axis=-1)
    r = np.sqrt(r2)
    mz = pts[..., 2] / r
    coef = moment_t_m3 / (4 * np.pi * r2 * r)
    out = 3.0 * (coef * mz / r)[..., None] * pts
    out[..., 2] -= coef
    return out


def surface_distance(magnet: MagnetSpec, local_points) -> np.ndarray:
    """Signed distance to the magnet body; negative inside."""
    p = np.asarray(local_points, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    h = magnet.length / 2
    r_out = magnet.diameter / 2
    if magnet.shape is Shape.SPHERE:
        return np.sqrt(x**2 + y**2 + z**2) - r_out
    if magnet.shape is Shape.CUBE:
        d = np.stack([np.abs(x) - r_out, np.abs(y) - r_out, np.abs(z) - h], axis=-1)
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=-1)
        return outside + np.minimum(np.max(d, axis=-1), 0.0)
    rho = np.hypot(x, y)
    dr = rho - r_out
    if magnet.shape is Shape.TUBE:
        dr = np.maximum(dr, magnet.inner_diameter / 2 - rho)
    dz = np.abs(z) - h
    outside = np.hypot(np.maximum(dr, 0.0), np.maximum(dz, 0.0))
    return outside + np.minimum(np.maximum(dr, dz), 0.0)


def _check_points(magnet, local_points):
    if not np.all(np.isfinite(local_points)):
        raise ValueError("evaluation points must be finite")
    dist = surface_distance(magnet, local_points)
    if np.any(dist <= SURFACE_CLEARANCE):
        worst = float(np.min(dist))
        raise DomainError(f"point inside or on the {magnet.shape.value} magnet (surface distance {worst:.3e} m)")


def field_local(magnet: MagnetSpec, local_points, check: bool = True) -> np.ndarray:
    """Flux density in the magnet frame at points given in the magnet frame."""
    pts = np.asarray(local_points, dtype=float)
    if pts.shape[-1] != 3:
        raise ValueError("points must have a trailing dimension of 3")
    if check:
        _check_points(magnet, pts)
    br = magnet.effective_remanence
    r = magnet.diameter / 2
    h = magnet.length / 2
    if magnet.shape is Shape.CYLINDER:
        return _cylinder_local(r, h, br, pts)
    if magnet.shape is Shape.TUBE:
        return _cylinder_local(r, h, br, pts) - _cylinder_local(magnet.inner_diameter / 2, h, br, pts)
    if magnet.shape is Shape.CUBE:
        return _prism_local(r, r, h, br, pts)
    return _dipole_local(br * magnet.volume, pts)


def field(magnet: MagnetSpec, magnet_pose: Pose, points) -> np.ndarray:
    """Flux density (tesla) in the parent frame.

    ``points`` is ``(3,)`` or ``(..., 3)``; the result has the same shape.
    Raises :class:`DomainError` for points within 1 um of the magnet body.
    """
    local = magnet_pose.to_local(points)
    return field_local(magnet, local) @ magnet_pose.rotation.T


def field_vector(magnet: MagnetSpec, magnet_pose: Pose, point) -> FieldVector:
    return FieldVector.from_array(field(magnet, magnet_pose, np.asarray(point, dtype=float).reshape(3)))


# ---------------------------------------------------------------------------
# quadrature oracle (tests only)


def _bracket_g0(d, u1, u2):
    """[u / (d sqrt(d + u^2))] from u1 to u2, stable for small d."""
    s1 = np.sqrt(d + u1 * u1)
    s2 = np.sqrt(d + u2 * u2)
    if u1 * u2 > 0:
        return (u2 * u2 - u1 * u1) / ((u2 * s1 + u1 * s2) * s1 * s2)
    return (u2 / s2 - u1 / s1) / d


def _cylinder_shell_oracle(radius, half_length, br, point, rtol):
    # Biot-Savart over the azimuthal surface current K = M phi_hat; the axial
    # integral is done in closed form, azimuth adaptively.
    x, y, z = point
    a = radius
    u1, u2 = z - half_length, z + half_length

    def integrand(phi):
        c, s = np.cos(phi), np.sin(phi)
        d = (x - a * c) ** 2 + (y - a * s) ** 2
        g0 = _bracket_g0(d, u1, u2)
        g1 = 1.0 / np.sqrt(d + u1 * u1) - 1.0 / np.sqrt(d + u2 * u2)
        return np.array([c * g1, s * g1, (a - x * c - y * s) * g0])

    val, err = quad_vec(integrand, 0.0, 2 * np.pi, epsabs=0.0, epsrel=rtol, limit=2000)
    _oracle_check(val, err, rtol)
    return br * a / (4 * np.pi) * val


def _prism_face_oracle(hx, hy, z0, point, rtol):
    x, y, z = point
    zz = z - z0
    v1, v2 = y - hy, y + hy

    def integrand(xp):
        xx = x - xp
        q = xx * xx + zz * zz
        g0 = _bracket_g0(q, v1, v2)
        g1 = 1.0 / np.sqrt(q + v1 * v1) - 1.0 / np.sqrt(q + v2 * v2)
        return np.array([xx * g0, g1, zz * g0])

    val, err = quad_vec(integrand, -hx, hx, epsabs=0.0, epsrel=rtol, limit=2000)
    _oracle_check(val, err, rtol)
    return val


def _sphere_oracle(radius, br, point, rtol):
    # surface pole density M cos(theta) on the sphere
    p = np.asarray(point, dtype=float)

    def ring(theta):
        st, ct = np.sin(theta), np.cos(theta)

        def inner(phi):
            src = radius * np.array([st * np.cos(phi), st * np.sin(phi), ct])
            d = p - src
            return d / np.linalg.norm(d) ** 3

        val, err = quad_vec(inner, 0.0, 2 * np.pi, epsabs=0.0, epsrel=rtol * 1e-2, limit=2000)
        _oracle_check(val, err, rtol * 1e-2)
        return val * ct * st

    val, err = quad_vec(ring, 0.0, np.pi, epsabs=0.0, epsrel=rtol, limit=2000)
    _oracle_check(val, err, rtol)
    return br * radius**2 / (4 * np.pi) * val


def _oracle_check(val, err, rtol):
    if not np.all(np.isfinite(val)) or err > max(10 * rtol * np.linalg.norm(val), 1e-300):
        raise OracleError(f"quadrature did not converge (error estimate {err:.3e})")


def field_oracle(magnet: MagnetSpec, point, rtol: float = 1e-11) -> FieldVector:
    """Field by adaptive quadrature over equivalent surface currents/charges.

    Independent of :func:`field`; intended for validation, not speed.
    ``point`` is in the magnet frame.
    """
    p = np.asarray(point, dtype=float).reshape(3)
    _check_points(magnet, p)
    br = magnet.effective_remanence
    r = magnet.diameter / 2
    h = magnet.length / 2
    if magnet.shape is Shape.CYLINDER:
        b = _cylinder_shell_oracle(r, h, br, p, rtol)
    elif magnet.shape is Shape.TUBE:
        b = _cylinder_shell_oracle(r, h, br, p, rtol) - _cylinder_shell_oracle(magnet.inner_diameter / 2, h, br, p, rtol)
    elif magnet.shape is Shape.CUBE:
        b = br / (4 * np.pi) * (_prism_face_oracle(r, r, h, p, rtol) - _prism_face_oracle(r, r, -h, p, rtol))
    else:
        b = _sphere_oracle(r, br, p, rtol)
    return FieldVector.from_array(b)


# ---------------------------------------------------------------------------
# sensitivity and interference


AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True, eq=False)
class SensitivityProfile:
    """Field and its displacement derivative along one motion axis.

    ``field`` and ``sensitivity`` are ``(steps, 3)`` in the sensor frame,
    tesla and tesla/meter respectively.
    """

    axis: str
    positions: np.ndarray
    field: np.ndarray
    sensitivity: np.ndarray

    @property
    def max_abs(self) -> np.ndarray:
        return np.max(np.abs(self.sensitivity), axis=0)

    def gauss_per_meter(self) -> np.ndarray:
        return self.sensitivity * TESLA_TO_GAUSS


def sensitivity_profile(
    magnet: MagnetSpec,
    sensor_pose: Pose,
    axis: str,
    span: tuple[float, float],
    steps: int,
    magnet_pose: Pose | None = None,
    step: float = 1e-6,
) -> SensitivityProfile:
    """Sample S = dB/dX while the magnet translates along ``axis``.

    Derivatives are central differences of :func:`field` with a ``step``
    displacement on either side of every sample.
    """
    if steps < 3:
        raise ValueError("steps must be >= 3")
    if axis not in AXES:
        raise ValueError(f"axis must be one of {sorted(AXES)}")
    lo, hi = float(span[0]), float(span[1])
    if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
        raise ValueError("span must be a finite increasing interval")
    base = magnet_pose or Pose()
    unit = np.zeros(3)
    unit[AXES[axis]] = 1.0
    positions = np.linspace(lo, hi, steps)

    # the sensor point in the magnet frame for each displacement
    sensor_parent = sensor_pose.translation
    offsets = np.concatenate([positions - step, positions, positions + step])
    local = (sensor_parent - base.translation - offsets[:, None] * unit) @ base.rotation
    try:
        b_local = field_local(magnet, local)
    except DomainError as exc:
        raise DomainError(f"motion range brings the magnet onto the sensor: {exc}") from None
    b_sensor = b_local @ base.rotation.T @ sensor_pose.rotation
    minus, mid, plus = np.split(b_sensor, 3)
    return SensitivityProfile(axis, positions, mid, (plus - minus) / (2 * step))


def sensor_below(magnet: MagnetSpec, gap: float) -> Pose:
    """Sensor pose on the magnet axis, ``gap`` below its bottom face."""
    return Pose([0.0, 0.0, -(magnet.length / 2 + gap)])


@dataclass(frozen=True)
class InterferenceReport:
    earth_offset: FieldVector
    neighbor_offset: FieldVector
    misalignment_spread: tuple[float, float, float]
    demag_delta: FieldVector

    def __post_init__(self):
        spread = np.asarray(self.misalignment_spread, dtype=float)
        if spread.shape != (3,) or not np.all(np.isfinite(spread)) or np.any(spread < 0):
            raise ValueError("misalignment_spread must be three finite non-negative values")

    @property
    def neighbor_lateral_gauss(self) -> float:
        """In-plane (x, y) part of the neighbor offset in gauss."""
        return float(np.hypot(self.neighbor_offset.bx, self.neighbor_offset.by) * TESLA_TO_GAUSS)

    @property
    def neighbor_gauss(self) -> float:
        return self.neighbor_offset.norm * TESLA_TO_GAUSS


def neighbor_pose(magnet: MagnetSpec, magnet_pose: Pose, neighbor_gap: float) -> Pose:
    """Pose of the facing unit's magnet when the gripper is closed.

    The opposite unit is the same part turned 180 degrees about the local y
    axis, so its magnet sits coaxially beyond ours with like poles facing and
    ``neighbor_gap`` of clearance between the two magnets.
    """
    offset = np.array([0.0, 0.0, magnet.length + neighbor_gap])
    flip = Pose(offset, rotation_y(np.pi).round(15))
    return magnet_pose.compose(flip)


def interference_budget(
    unit,
    neighbor_gap: float,
    misalignment_sigma: float,
    trials: int,
    seed: int,
    earth_field=None,
    rotation_sigma: float = 0.0,
) -> InterferenceReport:
    """Budget the four interference sources at the nominal sensor reading.

    ``unit`` is a :class:`hallforce.transducer.SensingUnitSpec`. Earth field
    defaults to 0.5 uT along the sensor z axis. Misalignment perturbs the
    magnet translation by zero-mean Gaussian noise (and optionally its
    orientation by ``rotation_sigma`` radians about x and y); each trial uses
    its own counter-derived random stream so the result does not depend on
    evaluation order.
    """
    if not (np.isfinite(neighbor_gap) and neighbor_gap > 0):
        raise ValueError("neighbor_gap must be positive")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if misalignment_sigma < 0 or rotation_sigma < 0:
        raise ValueError("misalignment sigmas must be non-negative")
    magnet = unit.magnet
    mpose = unit.magnet_pose()
    sensor = unit.sensor_pose()
    point = sensor.translation

    def reading(m, pose):
        return field(m, pose, point) @ sensor.rotation

    if earth_field is None:
        earth = np.array([0.0, 0.0, EARTH_FIELD_T])
    else:
        earth = np.asarray(earth_field, dtype=float).reshape(3)
    earth_sensor = earth @ sensor.rotation

    neighbor = reading(magnet, neighbor_pose(magnet, mpose, neighbor_gap))

    samples = np.empty((trials, 3))
    for k in range(trials):
        rng = np.random.default_rng([seed, k])
        dt = rng.normal(0.0, misalignment_sigma, 3) if misalignment_sigma > 0 else np.zeros(3)
        rot = mpose.rotation
        if rotation_sigma > 0:
            ax, ay = rng.normal(0.0, rotation_sigma, 2)
            rot = rot @ rotation_x(ax) @ rotation_y(ay)
        samples[k] = reading(magnet, Pose(mpose.translation + dt, rot))
    spread = samples.std(axis=0) * TESLA_TO_GAUSS if trials > 1 else np.zeros(3)

    weak = replace(magnet, demag_multiplier=0.99)
    strong = replace(magnet, demag_multiplier=1.0)
    demag = reading(strong, mpose) - reading(weak, mpose)

    return InterferenceReport(
        earth_offset=FieldVector.from_array(earth_sensor),
        neighbor_offset=FieldVector.from_array(neighbor),
        misalignment_spread=tuple(float(v) for v in spread),
        demag_delta=FieldVector.from_array(demag),
    )
