import io
import warnings

import numpy as np
import pytest

from hallforce.errors import DomainError
from hallforce.inverse import dataset as D
from hallforce.inverse.hysteresis import HysteresisConfig
from hallforce.transducer import SensorSpec, readings


@pytest.fixture(scope="module")
def short(unit=None):
    from hallforce.inverse.benchmark import reference_unit

    return D.synthesize_dataset(reference_unit(), SensorSpec(), D.LoadProfile(duration=5.0), seed=3)


def test_shapes_and_splits(short):
    n = 5000
    assert len(short) == n
    assert short.readings.shape == (n, 3) and short.force.shape == (n, 2)
    assert (short.split == "train").sum() == 3500
    assert np.all(short.split[:3500] == "train") and np.all(short.split[3500:] == "test")
    assert short.gt_marker.sum() == 500
    assert short.splits == ("test", "train")


def test_zero_order_hold(short):
    idx = np.flatnonzero(short.gt_marker)
    for a, b in zip(idx[:-1], idx[1:]):
        assert np.all(short.force[a:b] == short.force[a])


def test_readings_on_resolution_grid(short):
    counts = short.readings / 0.1
    assert np.allclose(counts, np.round(counts), atol=1e-9)


def test_same_seed_same_dataset(short, unit):
    again = D.synthesize_dataset(unit, SensorSpec(), D.LoadProfile(duration=5.0), seed=3)
    assert D.dataset_csv_text(again) == D.dataset_csv_text(short)
    other = D.synthesize_dataset(unit, SensorSpec(), D.LoadProfile(duration=5.0), seed=4)
    assert other.id != short.id


def test_ideal_matches_forward_chain(unit, sensor):
    ds = D.synthesize_dataset(unit, sensor, D.LoadProfile(duration=1.0), D.IDEAL, seed=0)
    # the forward chain at the held forces reproduces the readings at ground-truth instants
    m = ds.gt_marker
    r = readings(unit, ds.force[m, 0], ds.force[m, 1], sensor)
    assert np.array_equal(r.gauss, ds.readings[m])


def test_hysteresis_changes_readings(unit, sensor):
    prof = D.LoadProfile(duration=2.0)
    plain = D.synthesize_dataset(unit, sensor, prof, D.Effects(noise=False, hysteresis=HysteresisConfig()), seed=1)
    hyst = D.synthesize_dataset(unit, sensor, prof, D.Effects(noise=False), seed=1)
    assert np.array_equal(plain.force, hyst.force)
    assert not np.array_equal(plain.readings, hyst.readings)


def test_external_episodes(unit, sensor):
    sched = D.ExternalSchedule(episodes=((0.5, 0.5, 100.0, 0.0, 0.0),), ramp=0.1)
    prof = D.LoadProfile(duration=2.0)
    ds = D.synthesize_dataset(unit, sensor, prof, D.Effects(noise=False, hysteresis=HysteresisConfig(), external=sched), seed=0)
    base = D.synthesize_dataset(unit, sensor, prof, D.IDEAL, seed=0)
    assert ds.disturbed.sum() > 0
    assert np.array_equal(ds.readings[~ds.disturbed], base.readings[~ds.disturbed])
    held = (ds.time >= 0.6) & (ds.time < 0.9)
    assert np.allclose(ds.readings[held, 0] - base.readings[held, 0], 100.0, atol=0.11)


def test_csv_round_trip(short):
    text = D.dataset_csv_text(short)
    back = D.read_dataset_csv(io.StringIO(text))
    assert D.dataset_csv_text(back) == text
    assert back.id == short.id
    header = text.splitlines()[1].split(",")
    assert header[:8] == ["time_s", "fx_gt_n", "fz_gt_n", "bx_g", "by_g", "bz_g", "saturated", "split"]


def test_csv_errors():
    with pytest.raises(DomainError):
        D.read_dataset_csv(io.StringIO("time_s\n0\n"))
    with pytest.raises(DomainError):
        D.read_dataset_csv(io.StringIO('# meta: {}\nfoo,bar\n'))


def test_overload_warns_and_flags(unit, sensor):
    with pytest.warns(RuntimeWarning):
        ds = D.synthesize_dataset(unit, sensor, D.LoadProfile(duration=1.0, amplitude=(2000.0, 10.0)), D.IDEAL, seed=0)
    assert ds.saturated.any()


@pytest.mark.parametrize(
    "kw",
    [dict(duration=0.0), dict(gt_rate=0.0), dict(amplitude=(1.0,)), dict(frequency_spread=1.5), dict(min_fraction=2.0)],
)
def test_profile_validation(kw):
    with pytest.raises(DomainError):
        D.LoadProfile(**kw)


def test_rate_and_fraction_validation(unit, sensor):
    with pytest.raises(DomainError):
        D.synthesize_dataset(unit, sensor, D.LoadProfile(duration=1.0, gt_rate=300.0), seed=0)
    with pytest.raises(DomainError):
        D.synthesize_dataset(unit, sensor, D.LoadProfile(duration=1.0), seed=0, train_fraction=1.0)
    with pytest.raises(DomainError):
        D.synthesize_dataset(unit, sensor, D.LoadProfile(duration=1.0005), seed=0)


def test_design_dict_round_trip(unit):
    assert D.unit_from_dict(D.design_dict(unit)) == unit


def test_subset_keeps_metadata(short):
    te = short.subset("test")
    assert len(te) == 1500 and te.id == short.id
    assert len(short.subset("validation")) == 0
