"""Standard synthetic benchmarks shared by the tests and the CLI defaults."""
from __future__ import annotations

from dataclasses import dataclass, replace

from .. import flexure, transducer
from ..magnetostatics import MagnetSpec, Shape
from ..transducer import SensingUnitSpec, SensorSpec
from .dataset import IDEAL, Effects, ExternalSchedule, LoadProfile, synthesize_dataset
from .evaluation import disturbance_response, evaluate
from .grbf import grbf_fit
from .gru import GRUConfig, gru_train

AMPLITUDE_FRACTION = 0.8
DISTURBANCE = ExternalSchedule(count=12, duration=3.0, magnitude=(80.0, 200.0), ramp=0.5)


def reference_unit() -> SensingUnitSpec:
    """Outcome of the default sweep and selection: 45 x 4.5 x 15 mm steel
    flexures, 3 mm x 6 mm cylinder, 1.5 mm gap."""
    steel = flexure.load_materials()["steel"]
    beam = flexure.BeamSpec(steel, 45e-3, 4.5e-3, 15e-3, 0.5e-3)
    return SensingUnitSpec(beam, beam, MagnetSpec(Shape.CYLINDER, 3e-3, 6e-3, 1.2))


def standard_profile(unit: SensingUnitSpec, sensor: SensorSpec, duration: float = 100.0) -> LoadProfile:
    """Coupled two-axis load at 80% of the design force range."""
    fr = transducer.force_range(unit, sensor)
    amp = (round(AMPLITUDE_FRACTION * fr.x, 6), round(AMPLITUDE_FRACTION * fr.z, 6))
    return LoadProfile(duration=duration, amplitude=amp)


@dataclass(frozen=True)
class TableRow:
    gru3_fz: float
    grbf_fz: float
    gru2_fz: float
    metrics: dict

    @property
    def ordered(self) -> bool:
        return self.gru3_fz < self.grbf_fz < self.gru2_fz


def table_one(seed: int, unit=None, sensor=None, gru: GRUConfig = GRUConfig(), duration: float = 100.0) -> TableRow:
    """Ideal GRBF and 2-/3-axis GRUs scored on the held-out part of one
    hysteretic, noisy, coupled record.

    The GRBF is the ideal model: fitted on a separate noiseless,
    hysteresis-free record of the same design.
    """
    unit = unit or reference_unit()
    sensor = sensor or SensorSpec()
    profile = standard_profile(unit, sensor, duration)
    data = synthesize_dataset(unit, sensor, profile, Effects(), seed=seed)
    ideal = synthesize_dataset(unit, sensor, profile, IDEAL, seed=seed + 10_000)
    models = {
        "grbf": grbf_fit(ideal, split=None),
        "gru2": gru_train(data, replace(gru, input_axes=2, seed=seed)),
        "gru3": gru_train(data, replace(gru, input_axes=3, seed=seed)),
    }
    metrics = {k: evaluate(m, data)[0] for k, m in models.items()}
    return TableRow(metrics["gru3"].rmse[1], metrics["grbf"].rmse[1], metrics["gru2"].rmse[1], metrics)


def disturbance_trial(seed: int, unit=None, sensor=None, gru: GRUConfig = GRUConfig(), duration: float = 100.0):
    """Train a 3-axis GRU on a record with external-field episodes and
    return the mean sigma (disturbed, nominal) on its held-out part."""
    unit = unit or reference_unit()
    sensor = sensor or SensorSpec()
    profile = standard_profile(unit, sensor, duration)
    data = synthesize_dataset(unit, sensor, profile, Effects(external=DISTURBANCE), seed=seed)
    model = gru_train(data, replace(gru, input_axes=3, seed=seed))
    return disturbance_response(model, data)


def sign_test_p(successes: int, trials: int) -> float:
    """One-sided binomial sign-test p-value for at least ``successes``."""
    from math import comb

    return float(sum(comb(trials, k) for k in range(successes, trials + 1)) / 2**trials)


__all__ = [
    "DISTURBANCE",
    "TableRow",
    "disturbance_trial",
    "reference_unit",
    "sign_test_p",
    "standard_profile",
    "table_one",
]

