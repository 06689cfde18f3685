"""Synthetic force/reading time series for one sensing unit."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from .. import flexure, transducer
from ..errors import DomainError
from ..magnetostatics import TESLA_TO_GAUSS, MagnetSpec, Pose, Shape
from ..transducer import SensingUnitSpec, SensorSpec
from .hysteresis import DEFAULT_HYSTERESIS, HysteresisConfig, hysteresis_apply

CSV_COLUMNS = ("time_s", "fx_gt_n", "fz_gt_n", "bx_g", "by_g", "bz_g", "saturated", "split", "gt_marker", "disturbed")
DATASET_VERSION = 1


@dataclass(frozen=True)
class LoadProfile:
    """Two independent sinusoids with slowly varying random amplitudes.

    Each axis frequency is drawn uniformly within ``+/- frequency_spread``
    (relative) of ``base_frequency``. Amplitudes are redrawn every
    ``envelope_period`` seconds in ``[min_fraction, 1] * amplitude`` and
    blended with a raised cosine.
    """

    duration: float = 100.0
    base_frequency: float = 0.5
    frequency_spread: float = 0.2
    amplitude: tuple[float, float] = (200.0, 200.0)
    envelope_period: float = 5.0
    min_fraction: float = 0.3
    gt_rate: float = 100.0

    def __post_init__(self):
        if not self.duration > 0:
            raise DomainError("duration must be positive")
        if not self.gt_rate > 0:
            raise DomainError("gt_rate must be positive")
        if len(self.amplitude) != 2 or min(self.amplitude) < 0:
            raise DomainError("amplitude must be two non-negative values")
        if not 0 <= self.frequency_spread < 1:
            raise DomainError("frequency_spread must be in [0, 1)")
        if not 0 <= self.min_fraction <= 1:
            raise DomainError("min_fraction must be in [0, 1]")
        if not self.envelope_period > 0:
            raise DomainError("envelope_period must be positive")


@dataclass(frozen=True)
class ExternalSchedule:
    """Random external-field episodes added to B before quantization.

    Each episode ramps up over ``ramp`` seconds to a vector of random
    direction and magnitude in ``magnitude`` gauss, holds, then ramps down.
    ``episodes`` lists explicit ``(start_s, duration_s, bx_g, by_g, bz_g)``
    tuples and overrides the random draw when non-empty.
    """

    count: int = 0
    duration: float = 4.0
    magnitude: tuple[float, float] = (20.0, 60.0)
    ramp: float = 0.5
    episodes: tuple[tuple[float, float, float, float, float], ...] = ()
    ambient: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Effects:
    noise: bool = True
    hysteresis: HysteresisConfig = DEFAULT_HYSTERESIS
    external: ExternalSchedule = dc_field(default_factory=ExternalSchedule)


IDEAL = Effects(noise=False, hysteresis=HysteresisConfig())


@dataclass(eq=False)
class Dataset:
    time: np.ndarray
    force: np.ndarray  # zero-order-held ground truth at reading rate, (n, 2)
    readings: np.ndarray  # gauss, (n, 3)
    saturated: np.ndarray
    split: np.ndarray  # "train" / "test"
    gt_marker: np.ndarray
    disturbed: np.ndarray
    metadata: dict

    def __post_init__(self):
        n = len(self.time)
        for name in ("force", "readings", "saturated", "split", "gt_marker", "disturbed"):
            if len(getattr(self, name)) != n:
                raise DomainError(f"{name} length does not match time")
        if n > 1 and not np.all(np.diff(self.time) > 0):
            raise DomainError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.time)

    @property
    def id(self) -> str:
        return self.metadata["dataset_id"]

    @property
    def gt_time(self) -> np.ndarray:
        return self.time[self.gt_marker]

    @property
    def gt_force(self) -> np.ndarray:
        return self.force[self.gt_marker]

    def subset(self, split: str) -> "Dataset":
        mask = self.split == split
        meta = dict(self.metadata)
        meta["subset"] = split
        return Dataset(
            self.time[mask],
            self.force[mask],
            self.readings[mask],
            self.saturated[mask],
            self.split[mask],
            self.gt_marker[mask],
            self.disturbed[mask],
            meta,
        )

    @property
    def splits(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.split.tolist())))


def design_dict(unit: SensingUnitSpec) -> dict:
    def beam(b):
        return {
            "material": b.material.name,
            "length": b.length,
            "thickness": b.thickness,
            "width": b.width,
            "max_deflection_cap": b.max_deflection_cap,
        }

    m = unit.magnet
    return {
        "lateral_beam": beam(unit.lateral_beam),
        "longitudinal_beam": beam(unit.longitudinal_beam),
        "magnet": {
            "shape": m.shape.value,
            "diameter": m.diameter,
            "length": m.length,
            "remanence": m.remanence,
            "inner_diameter": m.inner_diameter,
            "demag_multiplier": m.demag_multiplier,
        },
        "gap": unit.gap,
        "sensor_offset": unit.sensor_offset.translation.tolist(),
        "magnet_offset": unit.magnet_offset.translation.tolist(),
        "include_tilt": unit.include_tilt,
    }


def unit_from_dict(d: dict, materials: dict | None = None) -> SensingUnitSpec:
    """Inverse of :func:`design_dict`; missing optional keys take defaults."""
    lib = materials or flexure.load_materials()
    try:
        beams = []
        for key in ("lateral_beam", "longitudinal_beam"):
            b = d[key]
            if b["material"] not in lib:
                raise DomainError(f"unknown material {b['material']!r}")
            beams.append(
                flexure.BeamSpec(
                    lib[b["material"]],
                    float(b["length"]),
                    float(b["thickness"]),
                    float(b["width"]),
                    float(b.get("max_deflection_cap", 0.5e-3)),
                )
            )
        m = d["magnet"]
        magnet = MagnetSpec(
            Shape(m["shape"]),
            float(m["diameter"]),
            float(m["length"]),
            float(m.get("remanence", 1.2)),
            float(m.get("inner_diameter", 0.0)),
            float(m.get("demag_multiplier", 1.0)),
        )
    except KeyError as exc:
        raise DomainError(f"design is missing {exc.args[0]!r}") from None
    return SensingUnitSpec(
        beams[0],
        beams[1],
        magnet,
        float(d.get("gap", transducer.MIN_GAP)),
        Pose(d.get("sensor_offset", [0.0, 0.0, 0.0])),
        Pose(d.get("magnet_offset", [0.0, 0.0, 0.0])),
        bool(d.get("allow_small_gap", False)),
        bool(d.get("include_tilt", True)),
    )


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dataset_id(meta: dict) -> str:
    text = json.dumps({k: v for k, v in meta.items() if k != "dataset_id"}, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _envelope(rng, t, period, lo, hi):
    knots = rng.uniform(lo, hi, size=int(math.ceil(t[-1] / period)) + 2)
    pos = t / period
    k = np.floor(pos).astype(int)
    frac = pos - k
    w = 0.5 - 0.5 * np.cos(np.pi * frac)
    return knots[k] * (1 - w) + knots[k + 1] * w


def force_profile(profile: LoadProfile, t: np.ndarray, rng) -> np.ndarray:
    """Continuous (F_x, F_z) at times ``t``."""
    out = np.zeros((len(t), 2))
    for axis in range(2):
        amp = profile.amplitude[axis]
        f = profile.base_frequency * (1 + rng.uniform(-profile.frequency_spread, profile.frequency_spread))
        phase = rng.uniform(0, 2 * np.pi)
        env = _envelope(rng, t, profile.envelope_period, profile.min_fraction * amp, amp)
        out[:, axis] = env * np.sin(2 * np.pi * f * t + phase)
    return out


def external_field(schedule: ExternalSchedule, t: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
    """External field in gauss per sample and the disturbed mask."""
    b = np.tile(np.asarray(schedule.ambient, dtype=float), (len(t), 1))
    mask = np.zeros(len(t), dtype=bool)
    episodes = list(schedule.episodes)
    if not episodes and schedule.count > 0:
        span = t[-1] - t[0]
        slots = span / schedule.count
        if schedule.duration > slots:
            raise DomainError("external episodes do not fit in the record")
        for k in range(schedule.count):
            start = t[0] + k * slots + rng.uniform(0, slots - schedule.duration)
            v = rng.normal(size=3)
            v *= rng.uniform(*schedule.magnitude) / np.linalg.norm(v)
            episodes.append((start, schedule.duration, *v))
    for start, dur, *vec in episodes:
        inside = (t >= start) & (t < start + dur)
        ramp = max(schedule.ramp, 1e-12)
        w = np.clip(np.minimum(t - start, start + dur - t) / ramp, 0, 1) * inside
        b += w[:, None] * np.asarray(vec, dtype=float)
        mask |= inside
    return b, mask


def synthesize_dataset(
    unit: SensingUnitSpec,
    sensor: SensorSpec,
    profile: LoadProfile = LoadProfile(),
    effects: Effects = Effects(),
    seed: int = 0,
    train_fraction: float = 0.7,
) -> Dataset:
    """Forces -> (hysteretic) deflections -> field -> noisy quantized readings."""
    rate = sensor.sample_rate
    ratio = rate / profile.gt_rate
    if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
        raise DomainError("reading rate must be an integer multiple of the ground-truth rate")
    ratio = int(round(ratio))
    n = profile.duration * rate
    if abs(n - round(n)) > 1e-6 or abs(n / ratio - round(n / ratio)) > 1e-6:
        raise DomainError("duration must hold a whole number of samples at both rates")
    n = int(round(n))
    if not 0 < train_fraction < 1:
        raise DomainError("train_fraction must be in (0, 1)")
    effects.hysteresis.validate()

    ss = np.random.SeedSequence(seed)
    r_force, r_noise, r_ext = (np.random.default_rng(s) for s in ss.spawn(3))
    t = np.arange(n) / rate
    force = force_profile(profile, t, r_force)

    fr = transducer.force_range(unit, sensor)
    over = (np.abs(force[:, 0]) > fr.x) | (np.abs(force[:, 1]) > fr.z)
    if np.any(over):
        warnings.warn(
            f"load schedule exceeds the design force range ({fr.x:.1f}, {fr.z:.1f}) N on {int(over.sum())} samples",
            RuntimeWarning,
            stacklevel=2,
        )

    dx, dy, _ = transducer.displacements(unit, force[:, 0], force[:, 1])
    hyst = effects.hysteresis
    if not hyst.is_identity:
        cap = np.array([unit.lateral_beam.max_deflection_cap, unit.longitudinal_beam.max_deflection_cap])
        scaled = np.stack([dx, dy], axis=1) / cap
        hyst_cfg = HysteresisConfig(hyst.alpha, hyst.beta, hyst.gamma, hyst.n, 1.0)
        d = hysteresis_apply(scaled, hyst_cfg) * cap
        dx, dy = d[:, 0], d[:, 1]
    tilt = transducer.tilt_for_deflection(unit, dy)
    b = transducer.field_at_sensor(unit, dx, dy, tilt) * TESLA_TO_GAUSS
    ext, disturbed = external_field(effects.external, t, r_ext)
    b = b + ext
    if effects.noise and sensor.noise_sigma > 0:
        b = b + r_noise.normal(0.0, sensor.noise_sigma, b.shape)
    reading = transducer.quantize(b / TESLA_TO_GAUSS, sensor)

    marker = (np.arange(n) % ratio) == 0
    held = force[np.flatnonzero(marker)[np.arange(n) // ratio]]
    n_train = int(round(train_fraction * n))
    split = np.where(np.arange(n) < n_train, "train", "test")
    meta = _plain(
        {
            "version": DATASET_VERSION,
            "design": design_dict(unit),
            "sensor": asdict(sensor),
            "profile": asdict(profile),
            "effects": {
                "noise": effects.noise,
                "hysteresis": asdict(effects.hysteresis),
                "external": asdict(effects.external),
            },
            "seed": int(seed),
            "train_fraction": train_fraction,
            "reading_rate": rate,
            "alignment": "zero-order hold",
        }
    )
    meta["dataset_id"] = dataset_id(meta)
    return Dataset(
        t,
        held,
        reading.gauss,
        reading.saturated.any(axis=1) | over,
        split,
        marker,
        disturbed,
        meta,
    )


# ---------------------------------------------------------------------------
# CSV


def _f(v: float) -> str:
    return repr(float(v))


def write_dataset_csv(ds: Dataset, stream) -> None:
    stream.write("# meta: " + json.dumps(ds.metadata, sort_keys=True) + "\n")
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for i in range(len(ds)):
        w.writerow(
            (
                _f(ds.time[i]),
                _f(ds.force[i, 0]),
                _f(ds.force[i, 1]),
                _f(ds.readings[i, 0]),
                _f(ds.readings[i, 1]),
                _f(ds.readings[i, 2]),
                int(ds.saturated[i]),
                ds.split[i],
                int(ds.gt_marker[i]),
                int(ds.disturbed[i]),
            )
        )


def dataset_csv_text(ds: Dataset) -> str:
    buf = io.StringIO()
    write_dataset_csv(ds, buf)
    return buf.getvalue()


def read_dataset_csv(stream) -> Dataset:
    meta = None
    lines = []
    for line in stream:
        if line.startswith("#"):
            if line.startswith("# meta: "):
                meta = json.loads(line[len("# meta: ") :])
            continue
        lines.append(line)
    if meta is None:
        raise DomainError("dataset file has no metadata line")
    rows = list(csv.reader(lines))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise DomainError(f"dataset header must be {','.join(CSV_COLUMNS)}")
    body = rows[1:]
    if not body:
        raise DomainError("dataset has no rows")
    num = np.array([[float(r[i]) for i in range(6)] for r in body])
    return Dataset(
        num[:, 0],
        num[:, 1:3],
        num[:, 3:6],
        np.array([r[6] == "1" for r in body]),
        np.array([r[7] for r in body]),
        np.array([r[8] == "1" for r in body]),
        np.array([r[9] == "1" for r in body]),
        meta,
    )
