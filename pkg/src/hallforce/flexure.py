"""Cantilever flexure mechanics.

The flexure is a prismatic beam clamped at ``x = 0`` (``w = w' = 0``) with a
free tip at ``x = L``. Closed forms cover the small-deflection response to a
tip load; :func:`solve_von_karman` adds membrane stretching by finite
differences.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml
from scipy import sparse
from scipy.integrate import cumulative_trapezoid, solve_ivp, trapezoid
from scipy.sparse.linalg import spsolve

from .errors import ConfigurationError, DomainError, SolverError

DEFAULT_LIFE_CYCLES = 1e7


class SlenderBeamWarning(UserWarning):
    """Beam is too thick for slender-beam theory (t/L > 0.2)."""


@dataclass(frozen=True)
class MaterialSpec:
    name: str
    youngs_modulus: float
    yield_strength: float
    fatigue_strength_coeff: float | None = None
    fatigue_exponent: float | None = None
    endurance_limit: float | None = None
    safety_factor: float = 1.0

    def __post_init__(self):
        if not self.youngs_modulus > 0:
            raise ValueError("youngs_modulus must be positive")
        if not self.yield_strength > 0:
            raise ValueError("yield_strength must be positive")
        if self.safety_factor < 1:
            raise ValueError("safety_factor must be >= 1")
        if self.fatigue_exponent is not None and self.fatigue_exponent >= 0:
            raise ValueError("Basquin exponent must be negative")
        if self.endurance_limit is not None and self.endurance_limit <= 0:
            raise ValueError("endurance_limit must be positive")

    @property
    def has_basquin(self) -> bool:
        return self.fatigue_strength_coeff is not None and self.fatigue_exponent is not None


_MATERIAL_FIELDS = {
    "name", "youngs_modulus", "yield_strength", "fatigue_strength_coeff",
    "fatigue_exponent", "endurance_limit", "safety_factor",
}


def load_materials(path: str | Path | None = None) -> dict[str, MaterialSpec]:
    """Read a material library file (bundled library by default)."""
    if path is None:
        text = resources.files("hallforce.data").joinpath("materials.yaml").read_text()
    else:
        text = Path(path).read_text()
    doc = yaml.safe_load(text) or {}
    out = {}
    for rec in doc.get("materials", []):
        unknown = set(rec) - _MATERIAL_FIELDS
        if unknown:
            raise ConfigurationError(f"unknown material keys {sorted(unknown)}")
        # PyYAML reads "2.2e9" as a string, so coerce numerics explicitly
        kw = {k: (v if k == "name" or v is None else float(v)) for k, v in rec.items()}
        mat = MaterialSpec(**kw)
        out[mat.name] = mat
    return out


@dataclass(frozen=True)
class BeamSpec:
    material: MaterialSpec
    length: float
    thickness: float
    width: float
    max_deflection_cap: float = 0.5e-3

    def __post_init__(self):
        dims = (self.length, self.thickness, self.width)
        if not all(np.isfinite(v) and v > 0 for v in dims):
            raise ValueError("beam length, thickness and width must be positive")
        if not (np.isfinite(self.max_deflection_cap) and self.max_deflection_cap >= 0):
            raise ValueError("max_deflection_cap must be non-negative")
        if self.thickness / self.length > 0.2:
            warnings.warn(
                f"t/L = {self.thickness / self.length:.2f} is outside slender-beam validity",
                SlenderBeamWarning,
                stacklevel=3,
            )

    @property
    def second_moment(self) -> float:
        return self.width * self.thickness**3 / 12.0

    @property
    def area(self) -> float:
        return self.width * self.thickness

    @property
    def flexural_rigidity(self) -> float:
        return self.material.youngs_modulus * self.second_moment

    @property
    def compliance(self) -> float:
        """Tip deflection per unit tip load, m/N."""
        return self.length**3 / (3.0 * self.flexural_rigidity)


def tip_slope(P: float, beam: BeamSpec) -> float:
    """Edge slope P L^2 / (2 E I) in radians."""
    return P * beam.length**2 / (2.0 * beam.flexural_rigidity)


def tip_deflection(P: float, beam: BeamSpec) -> float:
    return P * beam.length**3 / (3.0 * beam.flexural_rigidity)


def deflection_profile(P: float, beam: BeamSpec, x) -> np.ndarray:
    """Linear tip-load deflection w(x) = P x^2 (3L - x) / (6 E I)."""
    x = np.asarray(x, dtype=float)
    return P * x**2 * (3.0 * beam.length - x) / (6.0 * beam.flexural_rigidity)


def load_for_deflection(deflection: float, beam: BeamSpec) -> float:
    return deflection / beam.compliance


def integrate_bending(P: float, beam: BeamSpec, points: int = 101, rtol: float = 1e-13):
    """Shoot ``EI w'' = P (L - x)`` from the clamped root with an adaptive
    Runge-Kutta integrator. Independent of the closed forms and used as
    their reference. Returns ``(x, w, slope)`` on a uniform grid."""
    ei = beam.flexural_rigidity
    L = beam.length
    x = np.linspace(0.0, L, points)

    def rhs(s, y):
        return [y[1], P * (L - s) / ei]

    # absolute floor from the load scale so the zero initial state does not stall step control
    floor = rtol * max(abs(P), 1e-300) * L**2 / ei
    sol = solve_ivp(rhs, (0.0, L), [0.0, 0.0], method="DOP853", t_eval=x, rtol=rtol, atol=[floor * L, floor])
    if not sol.success:
        raise SolverError(f"bending integration failed: {sol.message}")
    return x, sol.y[0], sol.y[1]


def bending_stress(beam: BeamSpec, P: float, x: float = 0.0) -> float:
    """Outer-fiber stress M(x) c / I with M = P (L - x), c = t / 2."""
    if not 0.0 <= x <= beam.length:
        raise DomainError(f"x = {x} lies outside the beam [0, {beam.length}]")
    return P * (beam.length - x) * (beam.thickness / 2.0) / beam.second_moment


@dataclass(frozen=True)
class FatigueResult:
    admissible: bool
    cycles: float
    amplitude: float


def basquin_life(amplitude: float, material: MaterialSpec) -> float:
    """Cycles to failure N_f = 0.5 (sigma_a / sigma'_f)^(1/b)."""
    if amplitude <= 0:
        return math.inf
    return 0.5 * (amplitude / material.fatigue_strength_coeff) ** (1.0 / material.fatigue_exponent)


def fatigue_admissible(
    sigma_max: float,
    sigma_min: float,
    material: MaterialSpec,
    life_threshold: float = DEFAULT_LIFE_CYCLES,
) -> FatigueResult:
    """Screen a stress cycle against the material's S-N description.

    With an endurance limit the cycle is admissible when
    ``sigma_a * safety_factor <= endurance_limit``; otherwise the Basquin
    life must reach ``life_threshold`` cycles.
    """
    if sigma_max < sigma_min:
        raise ValueError("sigma_max must be >= sigma_min")
    amp = (sigma_max - sigma_min) / 2.0
    if material.endurance_limit is None and not material.has_basquin:
        raise ConfigurationError(f"material {material.name!r} has neither an endurance limit nor Basquin coefficients")
    if amp == 0:
        return FatigueResult(True, math.inf, 0.0)
    if material.endurance_limit is not None:
        ok = amp * material.safety_factor <= material.endurance_limit
        if ok:
            cycles = math.inf
        elif material.has_basquin:
            cycles = basquin_life(amp, material)
        else:
            cycles = math.nan
        return FatigueResult(ok, cycles, amp)
    cycles = basquin_life(amp, material)
    return FatigueResult(cycles >= life_threshold, cycles, amp)


def fatigue_stress_limit(material: MaterialSpec, life_threshold: float = DEFAULT_LIFE_CYCLES) -> float:
    """Largest admissible stress amplitude."""
    if material.endurance_limit is not None:
        return material.endurance_limit / material.safety_factor
    if material.has_basquin:
        return material.fatigue_strength_coeff * (2.0 * life_threshold) ** material.fatigue_exponent
    raise ConfigurationError(f"material {material.name!r} has neither an endurance limit nor Basquin coefficients")


# ---------------------------------------------------------------------------
# Von Karman beam


@dataclass(frozen=True, eq=False)
class BeamState:
    x: np.ndarray
    w: np.ndarray
    u: np.ndarray
    N: np.ndarray
    q: np.ndarray
    load_type: str
    iterations: int = 1
    residual: float = 0.0

    def __post_init__(self):
        for name in ("x", "w", "u", "N", "q"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if np.any(np.diff(self.x) <= 0):
            raise ValueError("grid must be strictly increasing")

    @property
    def tip_deflection(self) -> float:
        return float(self.w[-1])

    @property
    def tip_slope(self) -> float:
        return float(np.gradient(self.w, self.x, edge_order=2)[-1])


def axial_shortening(state: BeamState) -> float:
    """Inextensible foreshortening u(L) = -1/2 int (w')^2 dx."""
    slope = np.gradient(state.w, state.x, edge_order=2)
    return -0.5 * float(trapezoid(slope**2, state.x))


def _bending_system(beam, x, N, q, tip_load):
    """Solve the discretized bending equation for w on the grid.

    The fourth-order operator is split into two second-order difference
    equations in deflection and curvature, with ghost nodes w_{-1}, w_{n+1}
    and k_{n+1}. Eliminating the curvature recovers the usual five-point
    stencil; the split form is far better conditioned. Unknowns are
    nondimensionalized by the beam length.
    """
    n = len(x) - 1
    L = beam.length
    h = x[1] - x[0]
    ei = beam.flexural_rigidity
    dN = np.gradient(N, x, edge_order=2)
    nw = n + 3  # w_{-1} .. w_{n+1}
    size = nw + n + 2  # then k_0 .. k_{n+1}
    rows, cols, vals = [], [], []
    rhs = np.zeros(size)
    rh2 = (h / L) ** 2

    def W(i):
        return i + 1

    def K(i):
        return nw + i

    def put(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    r = 0
    for i in range(0, n + 1):
        put(r, W(i - 1), 1.0)
        put(r, W(i), -2.0)
        put(r, W(i + 1), 1.0)
        put(r, K(i), -rh2)
        r += 1
    for i in range(1, n + 1):
        put(r, K(i - 1), 1.0)
        put(r, K(i), -2.0)
        put(r, K(i + 1), 1.0)
        a2 = N[i] * L**2 / ei
        a1 = dN[i] * L**2 * h / (2.0 * ei)
        put(r, W(i - 1), -a2 + a1)
        put(r, W(i), 2.0 * a2)
        put(r, W(i + 1), -a2 - a1)
        rhs[r] = q[i] * h**2 * L / ei
        r += 1
    put(r, W(0), 1.0)
    r += 1
    put(r, W(1), 1.0)
    put(r, W(-1), -1.0)
    r += 1
    put(r, K(n), 1.0)
    r += 1
    # shear: EI k' - N w' = -P at the tip
    aN = N[n] * L**2 / ei
    put(r, K(n + 1), 1.0)
    put(r, K(n - 1), -1.0)
    put(r, W(n + 1), -aN)
    put(r, W(n - 1), aN)
    rhs[r] = -2.0 * h * tip_load * L / ei
    mat = sparse.csr_matrix((vals, (rows, cols)), shape=(size, size))
    sol = spsolve(mat.tocsc(), rhs)
    return sol[1:n + 2] * L


def paper_literal_stretching(beam: BeamSpec, x, w) -> np.ndarray:
    """u(x) from the stretching balance exactly as printed in the source.

    Integrates d/dx(EA u') = EI (w')^2 / 2 with u(0) = 0 and a traction-free
    tip. The right-hand side is dimensionally inconsistent; this exists only
    for side-by-side comparison with :func:`solve_von_karman`.
    """
    x = np.asarray(x, dtype=float)
    slope = np.gradient(w, x, edge_order=2)
    src = 0.5 * beam.flexural_rigidity * slope**2
    # EA u'(x) = -int_x^L src
    tail = trapezoid(src, x) - cumulative_trapezoid(src, x, initial=0.0)
    return cumulative_trapezoid(-tail / (beam.material.youngs_modulus * beam.area), x, initial=0.0)


def solve_von_karman(
    beam: BeamSpec,
    P: float,
    q=None,
    *,
    load: str = "tip",
    points: int = 201,
    axial_restraint: bool = False,
    tol: float = 1e-10,
    max_iter: int = 100,
    relaxation: float = 1.0,
    paper_literal: bool = False,
) -> BeamState:
    """Bending with membrane coupling by finite differences.

    ``EI w'''' - (N w')' = q`` is discretized on a uniform grid with ghost
    nodes for the clamped root and the free tip (zero moment, shear equal to
    the tip load). The membrane force follows ``N = EA (u' + (w')^2 / 2)``.
    With a free tip ``N`` vanishes identically; with ``axial_restraint`` the
    tip cannot slide and ``N`` is found by fixed-point iteration.

    ``load="tip"`` applies ``P`` at the tip; ``load="distributed"`` applies
    ``q(x) = P (L - x) / L`` instead. An extra ``q`` (callable or grid array)
    is added to either.
    """
    if points < 101:
        raise ValueError("points must be >= 101")
    if load not in ("tip", "distributed"):
        raise ValueError("load must be 'tip' or 'distributed'")
    L = beam.length
    x = np.linspace(0.0, L, points)
    qv = np.zeros(points)
    if q is not None:
        qv = qv + (np.asarray(q(x), dtype=float) if callable(q) else np.broadcast_to(np.asarray(q, dtype=float), x.shape))
    tip = 0.0
    if load == "tip":
        tip = P
    else:
        qv = qv + P * (L - x) / L
    ea = beam.material.youngs_modulus * beam.area

    N = np.zeros(points)
    w = _bending_system(beam, x, N, qv, tip)
    iterations = 1
    residual = 0.0
    if axial_restraint:
        prev_change = math.inf
        omega = relaxation
        for iterations in range(2, max_iter + 2):
            slope = np.gradient(w, x, edge_order=2)
            n_new = np.full(points, ea / L * 0.5 * trapezoid(slope**2, x))
            N = N + omega * (n_new - N)
            w_new = _bending_system(beam, x, N, qv, tip)
            scale = max(np.max(np.abs(w_new)), 1e-300)
            change = float(np.max(np.abs(w_new - w)) / scale)
            w = w_new
            if not np.all(np.isfinite(w)):
                raise SolverError("iterates became non-finite", residual=change)
            if change <= tol or np.max(np.abs(w)) == 0:
                residual = change
                break
            if change > prev_change:
                # oscillating stiffening update: damp it
                omega *= 0.5
                if omega < 1e-3:
                    raise SolverError(f"fixed-point iterates diverging (change {change:.3e})", residual=change)
            prev_change = change
        else:
            raise SolverError(f"no convergence after {max_iter} iterations (change {change:.3e})", residual=change)

    slope = np.gradient(w, x, edge_order=2)
    if paper_literal:
        u = paper_literal_stretching(beam, x, w)
    else:
        u = cumulative_trapezoid(N / ea - 0.5 * slope**2, x, initial=0.0)
    return BeamState(x, w, u, N, qv, load_type=load, iterations=iterations, residual=residual)
