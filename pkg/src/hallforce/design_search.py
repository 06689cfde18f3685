"""Grid sweep over flexure and magnet parameters, Pareto extraction and selection."""
from __future__ import annotations

import csv
import io
import itertools
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from importlib import resources
from typing import Iterable, Iterator, Sequence

import numpy as np
import yaml

from . import flexure
from .errors import ConfigurationError, SelectionError
from .flexure import BeamSpec
from .magnetostatics import TESLA_TO_GAUSS, MagnetSpec, Shape
from .transducer import (
    CONSTRAINTS,
    MIN_GAP,
    FeasibilityReport,
    SensingUnitSpec,
    SensorSpec,
    check_constraints,
    field_at_sensor,
    force_range_batch,
    magnetic_sensitivity,
)


@dataclass(frozen=True)
class GridAxis:
    """Inclusive linear grid ``start..stop`` with ``steps`` points."""

    start: float
    stop: float
    steps: int

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigurationError("steps must be a positive integer")
        if self.steps == 1 and self.start != self.stop:
            raise ConfigurationError("a single-step axis needs start == stop")
        if self.stop < self.start:
            raise ConfigurationError("stop must not be below start")

    def values(self) -> np.ndarray:
        return np.round(np.linspace(self.start, self.stop, int(self.steps)), 12)

    @classmethod
    def single(cls, value: float) -> "GridAxis":
        return cls(value, value, 1)


@dataclass(frozen=True)
class SweepConfig:
    magnet_diameter: GridAxis
    magnet_length: GridAxis
    beam_thickness: GridAxis
    beam_length: GridAxis
    materials: tuple[str, ...] = ("abs", "steel")
    beam_width: float = 15e-3
    shape: Shape = Shape.CYLINDER
    remanence: float = 1.2
    gap: float = MIN_GAP
    max_deflection_cap: float = 0.5e-3
    stress_ratio: float = -1.0
    life_threshold: float = flexure.DEFAULT_LIFE_CYCLES
    objectives: tuple[str, ...] = ("force_range", "force_sensitivity")
    seed: int = 0
    parallel: int = 1
    sensor: SensorSpec = dc_field(default_factory=SensorSpec)
    material_library: str | None = None

    def __post_init__(self):
        if not self.materials:
            raise ConfigurationError("at least one material is required")
        for obj in self.objectives:
            if obj not in ("force_range", "force_sensitivity"):
                raise ConfigurationError(f"unknown objective {obj!r}")
        if self.parallel < 1:
            raise ConfigurationError("parallel must be >= 1")

    @property
    def count(self) -> int:
        return (
            self.magnet_diameter.steps
            * self.magnet_length.steps
            * self.beam_thickness.steps
            * self.beam_length.steps
            * len(self.materials)
        )


def default_sweep_config(**overrides) -> SweepConfig:
    """Sweep ranges shipped in ``data/sweep_default.yaml``."""
    text = resources.files("hallforce.data").joinpath("sweep_default.yaml").read_text()
    cfg = sweep_config_from_dict(yaml.safe_load(text))
    if overrides:
        cfg = SweepConfig(**{**cfg.__dict__, **overrides})
    return cfg


_AXES = ("magnet_diameter", "magnet_length", "beam_thickness", "beam_length")
_SCALARS = {
    "beam_width": float,
    "remanence": float,
    "gap": float,
    "max_deflection_cap": float,
    "stress_ratio": float,
    "life_threshold": float,
    "seed": int,
    "parallel": int,
}


def sweep_config_from_dict(d: dict) -> SweepConfig:
    """Build a config from plain data; lengths are in meters."""
    known = set(_AXES) | set(_SCALARS) | {"materials", "shape", "objectives", "sensor", "material_library"}
    unknown = set(d) - known
    if unknown:
        raise ConfigurationError(f"unknown sweep keys: {sorted(unknown)}")
    kw = {}
    for name in _AXES:
        if name not in d:
            raise ConfigurationError(f"missing sweep axis {name!r}")
        a = d[name]
        if isinstance(a, (int, float)):
            kw[name] = GridAxis.single(float(a))
        else:
            extra = set(a) - {"start", "stop", "steps"}
            if extra:
                raise ConfigurationError(f"unknown keys in {name}: {sorted(extra)}")
            kw[name] = GridAxis(float(a["start"]), float(a["stop"]), int(a["steps"]))
    for name, typ in _SCALARS.items():
        if name in d:
            kw[name] = typ(d[name])
    if "materials" in d:
        kw["materials"] = tuple(str(m) for m in d["materials"])
    if "objectives" in d:
        kw["objectives"] = tuple(str(m) for m in d["objectives"])
    if "shape" in d:
        kw["shape"] = Shape(d["shape"])
    if "sensor" in d:
        s = dict(d["sensor"])
        extra = set(s) - {"range", "resolution", "noise_sigma", "sample_rate"}
        if extra:
            raise ConfigurationError(f"unknown sensor keys: {sorted(extra)}")
        kw["sensor"] = SensorSpec(**{k: float(v) for k, v in s.items()})
    if d.get("material_library") is not None:
        kw["material_library"] = str(d["material_library"])
    return SweepConfig(**kw)


def sweep_config_to_dict(cfg: SweepConfig) -> dict:
    out = {}
    for name in _AXES:
        a = getattr(cfg, name)
        out[name] = {"start": a.start, "stop": a.stop, "steps": a.steps}
    for name in _SCALARS:
        out[name] = getattr(cfg, name)
    out["materials"] = list(cfg.materials)
    out["objectives"] = list(cfg.objectives)
    out["shape"] = cfg.shape.value
    out["sensor"] = {k: getattr(cfg.sensor, k) for k in ("range", "resolution", "noise_sigma", "sample_rate")}
    out["material_library"] = cfg.material_library
    return out


# ---------------------------------------------------------------------------
# candidates and metrics


@dataclass(frozen=True)
class DesignCandidate:
    index: int
    beam: BeamSpec
    magnet: MagnetSpec
    gap: float = MIN_GAP

    def unit(self) -> SensingUnitSpec:
        return SensingUnitSpec(self.beam, self.beam, self.magnet, self.gap)


@dataclass(frozen=True)
class DesignMetrics:
    force_sensitivity: tuple[float, float]
    force_range: tuple[float, float]
    max_s: float
    neighbor_offset: float
    feasibility: FeasibilityReport | None
    binding_constraint: str
    error: str = ""

    @property
    def feasible(self) -> bool:
        return self.feasibility is not None and self.feasibility.feasible and min(self.force_range) > 0

    @property
    def sensitivity(self) -> float:
        return self.force_sensitivity[0]

    @property
    def range(self) -> float:
        return min(self.force_range)


def candidates(cfg: SweepConfig) -> list[DesignCandidate]:
    """Grid points in a fixed nesting order: material, D, M_L, L, t."""
    lib = flexure.load_materials(cfg.material_library)
    missing = [m for m in cfg.materials if m not in lib]
    if missing:
        raise ConfigurationError(f"materials not in library: {missing}")
    out = []
    grid = itertools.product(
        cfg.materials,
        cfg.magnet_diameter.values(),
        cfg.magnet_length.values(),
        cfg.beam_length.values(),
        cfg.beam_thickness.values(),
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", flexure.SlenderBeamWarning)
        for i, (mat, d, ml, bl, t) in enumerate(grid):
            beam = BeamSpec(lib[mat], float(bl), float(t), cfg.beam_width, cfg.max_deflection_cap)
            diameter = float(d)
            length = diameter if cfg.shape is Shape.SPHERE else float(ml)
            inner = diameter / 2.5 if cfg.shape is Shape.TUBE else 0.0
            magnet = MagnetSpec(cfg.shape, diameter, length, cfg.remanence, inner)
            out.append(DesignCandidate(i, beam, magnet, cfg.gap))
    return out


def _max_s(unit: SensingUnitSpec, cap: float, steps: int = 11) -> float:
    """Largest |dB_x/dx| over +/-cap of lateral travel, gauss/meter."""
    h = 1e-6
    xs = np.linspace(-cap, cap, steps) if cap > 0 else np.zeros(1)
    try:
        b = field_at_sensor(unit, np.concatenate([xs + h, xs - h]), 0.0, 0.0)
    except ValueError:
        return math.nan
    n = len(xs)
    s = (b[:n, 0] - b[n:, 0]) / (2 * h)
    return float(np.max(np.abs(s))) * TESLA_TO_GAUSS


def _evaluate_group(args) -> list[tuple[int, DesignMetrics]]:
    """Candidates sharing one magnet: magnet terms are computed once."""
    group, cfg = args
    out = []
    unit0 = group[0].unit()
    try:
        s = magnetic_sensitivity(unit0)
        max_s = _max_s(unit0, cfg.max_deflection_cap)
        ranges = force_range_batch(
            [c.unit() for c in group], cfg.sensor, stress_ratio=cfg.stress_ratio, life_threshold=cfg.life_threshold
        )
    except Exception as exc:  # recorded per candidate, never fatal
        return [(c.index, _failed(exc)) for c in group]
    for cand, fr in zip(group, ranges):
        try:
            unit = cand.unit()
            rep = check_constraints(
                unit, cfg.sensor, (0.0, 0.0), stress_ratio=cfg.stress_ratio, life_threshold=cfg.life_threshold
            )
            sens = (s.x * cand.beam.compliance, s.z * cand.beam.compliance)
            neighbor = (1.0 - rep.margins["interference"]) * 3.0 * cfg.sensor.resolution
            if not rep.feasible:
                binding = rep.binding_constraint
            else:
                binding = fr.binding_x if fr.x <= fr.z else fr.binding_z
            out.append((cand.index, DesignMetrics(sens, (fr.x, fr.z), max_s, neighbor, rep, binding)))
        except Exception as exc:
            out.append((cand.index, _failed(exc)))
    return out


def _failed(exc) -> DesignMetrics:
    nan = math.nan
    return DesignMetrics((nan, nan), (0.0, 0.0), nan, nan, None, "error", f"{type(exc).__name__}: {exc}")


def sweep(cfg: SweepConfig) -> list[tuple[DesignCandidate, DesignMetrics]]:
    """Evaluate every grid point. Results are ordered by candidate index,
    so the output does not depend on ``cfg.parallel``."""
    cands = candidates(cfg)
    groups: dict = {}
    for c in cands:
        groups.setdefault(c.magnet, []).append(c)
    jobs = [(g, cfg) for g in groups.values()]
    results: dict[int, DesignMetrics] = {}
    if cfg.parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallel) as ex:
            for part in ex.map(_evaluate_group, jobs):
                results.update(part)
    else:
        for job in jobs:
            results.update(_evaluate_group(job))
    return [(c, results[c.index]) for c in cands]


def iter_sweep(cfg: SweepConfig) -> Iterator[tuple[DesignCandidate, DesignMetrics]]:
    yield from sweep(cfg)


# ---------------------------------------------------------------------------
# Pareto front and selection


def _objective_matrix(metrics: Sequence[DesignMetrics], objectives: Sequence[str]) -> np.ndarray:
    cols = []
    for obj in objectives:
        if obj == "force_range":
            cols.append([m.range for m in metrics])
        elif obj == "force_sensitivity":
            cols.append([m.sensitivity for m in metrics])
        else:
            raise ConfigurationError(f"unknown objective {obj!r}")
    return np.array(cols, dtype=float).T.reshape(len(metrics), len(objectives))


def pareto_front(
    metrics: Sequence[DesignMetrics], objectives: Sequence[str] = ("force_range", "force_sensitivity")
) -> list[int]:
    """Indices (into ``metrics``) of feasible, non-dominated entries, ascending.

    Exact duplicates in objective space are all kept.
    """
    feasible = [i for i, m in enumerate(metrics) if m.feasible]
    if not feasible:
        warnings.warn("no feasible candidates; Pareto front is empty", RuntimeWarning, stacklevel=2)
        return []
    vals = _objective_matrix([metrics[i] for i in feasible], objectives)
    if vals.shape[1] == 2:
        keep = _front_2d(vals)
    else:
        keep = [a for a in range(len(vals)) if not _dominated(vals, a)]
    return sorted(feasible[k] for k in keep)


def _front_2d(vals: np.ndarray) -> list[int]:
    """Sort by the first objective descending; a block of equal first values
    survives only where it beats every earlier block on the second."""
    order = np.lexsort((-vals[:, 1], -vals[:, 0]))
    keep = []
    best = -math.inf
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and vals[order[j], 0] == vals[order[i], 0]:
            j += 1
        top = vals[order[i], 1]
        if top > best:
            keep.extend(int(k) for k in order[i:j] if vals[k, 1] == top)
            best = top
        i = j
    return keep


def _dominated(vals, a) -> bool:
    return bool(np.any(np.all(vals >= vals[a], axis=1) & np.any(vals > vals[a], axis=1)))


def pareto_front_bruteforce(metrics: Sequence[DesignMetrics], objectives=("force_range", "force_sensitivity")) -> list[int]:
    feasible = [i for i, m in enumerate(metrics) if m.feasible]
    vals = _objective_matrix([metrics[i] for i in feasible], objectives)
    out = []
    for a in range(len(feasible)):
        dominated = False
        for b in range(len(feasible)):
            if b != a and all(vals[b] >= vals[a]) and any(vals[b] > vals[a]):
                dominated = True
                break
        if not dominated:
            out.append(feasible[a])
    return out


@dataclass(frozen=True)
class Requirements:
    min_sensitivity: float = 0.0
    min_range: float = 350.0
    max_deflection: float = 0.5e-3
    min_gap: float = MIN_GAP


def _shortfall(c: DesignCandidate, m: DesignMetrics, req: Requirements) -> float:
    """Relative distance to meeting the requirements (0 when met)."""
    gaps = [
        max(0.0, 1 - m.sensitivity / req.min_sensitivity) if req.min_sensitivity > 0 else 0.0,
        max(0.0, 1 - m.range / req.min_range) if req.min_range > 0 else 0.0,
        max(0.0, c.beam.max_deflection_cap / req.max_deflection - 1) if req.max_deflection > 0 else 0.0,
        max(0.0, 1 - c.gap / req.min_gap) if req.min_gap > 0 else 0.0,
        0.0 if m.feasible else 1.0,
    ]
    return float(sum(v for v in gaps if np.isfinite(v))) + (0.0 if np.isfinite(m.sensitivity) else 10.0)


def meets(c: DesignCandidate, m: DesignMetrics, req: Requirements) -> bool:
    return (
        m.feasible
        and m.sensitivity >= req.min_sensitivity
        and m.range >= req.min_range
        and c.beam.max_deflection_cap <= req.max_deflection + 1e-15
        and c.gap >= req.min_gap - 1e-15
    )


def select_design(
    results: Sequence[tuple[DesignCandidate, DesignMetrics]], requirements: Requirements = Requirements()
) -> tuple[DesignCandidate, DesignMetrics]:
    """Feasible candidate with the highest lateral force sensitivity that
    meets every requirement; ties go to the lowest candidate index."""
    best = None
    for c, m in results:
        if not meets(c, m, requirements):
            continue
        if best is None or m.sensitivity > best[1].sensitivity:
            best = (c, m)
    if best is None:
        ranked = sorted(results, key=lambda cm: (_shortfall(cm[0], cm[1], requirements), cm[0].index))
        raise SelectionError("no candidate meets the requirements", nearest=tuple(c for c, _ in ranked[:5]))
    return best


# ---------------------------------------------------------------------------
# CSV


CSV_COLUMNS = (
    "index",
    "material",
    "beam_length_m",
    "beam_thickness_m",
    "beam_width_m",
    "deflection_cap_m",
    "magnet_shape",
    "magnet_diameter_m",
    "magnet_length_m",
    "magnet_inner_diameter_m",
    "remanence_t",
    "gap_m",
    "sensitivity_x_g_per_n",
    "sensitivity_z_g_per_n",
    "range_x_n",
    "range_z_n",
    "max_s_g_per_m",
    "neighbor_offset_g",
    "yield_ok",
    "fatigue_ok",
    "geometric_ok",
    "signal_range_ok",
    "interference_ok",
    "feasible",
    "binding_constraint",
    "error",
)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def result_row(c: DesignCandidate, m: DesignMetrics) -> list[str]:
    flags = m.feasibility.flags() if m.feasibility else {k: False for k in CONSTRAINTS}
    row = [
        c.index,
        c.beam.material.name,
        c.beam.length,
        c.beam.thickness,
        c.beam.width,
        c.beam.max_deflection_cap,
        c.magnet.shape.value,
        c.magnet.diameter,
        c.magnet.length,
        c.magnet.inner_diameter,
        c.magnet.remanence,
        c.gap,
        m.force_sensitivity[0],
        m.force_sensitivity[1],
        m.force_range[0],
        m.force_range[1],
        m.max_s,
        m.neighbor_offset,
        *(flags[k] for k in CONSTRAINTS),
        m.feasible,
        m.binding_constraint,
        m.error,
    ]
    return [_fmt(v) for v in row]


def write_results_csv(results: Iterable[tuple[DesignCandidate, DesignMetrics]], stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for c, m in results:
        w.writerow(result_row(c, m))


def results_csv_text(results) -> str:
    buf = io.StringIO()
    write_results_csv(results, buf)
    return buf.getvalue()


def read_results_csv(stream, materials: dict | None = None) -> list[tuple[DesignCandidate, DesignMetrics]]:
    """Rebuild sweep results from :func:`write_results_csv` output.

    Feasibility flags are restored; per-constraint margins are not stored
    in the file and come back empty.
    """
    lib = materials or flexure.load_materials()
    rows = csv.DictReader(line for line in stream if not line.startswith("#"))
    if rows.fieldnames is None or tuple(rows.fieldnames) != CSV_COLUMNS:
        raise ConfigurationError("sweep CSV header does not match the expected columns")
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", flexure.SlenderBeamWarning)
        for r in rows:
            f = {k: float(r[k]) for k in CSV_COLUMNS if k.endswith(("_m", "_t", "_n", "_g_per_n", "_g_per_m", "_g"))}
            beam = BeamSpec(
                lib[r["material"]], f["beam_length_m"], f["beam_thickness_m"], f["beam_width_m"], f["deflection_cap_m"]
            )
            magnet = MagnetSpec(
                Shape(r["magnet_shape"]), f["magnet_diameter_m"], f["magnet_length_m"], f["remanence_t"],
                f["magnet_inner_diameter_m"],
            )
            cand = DesignCandidate(int(r["index"]), beam, magnet, f["gap_m"])
            flags = {k: r[f"{k}_ok"] == "1" for k in CONSTRAINTS}
            rep = None
            if not r["error"]:
                rep = FeasibilityReport(
                    flags["yield"], flags["fatigue"], flags["geometric"], flags["signal_range"],
                    flags["interference"], r["binding_constraint"], {},
                )
            m = DesignMetrics(
                (f["sensitivity_x_g_per_n"], f["sensitivity_z_g_per_n"]),
                (f["range_x_n"], f["range_z_n"]),
                f["max_s_g_per_m"],
                f["neighbor_offset_g"],
                rep,
                r["binding_constraint"],
                r["error"],
            )
            out.append((cand, m))
    return out
