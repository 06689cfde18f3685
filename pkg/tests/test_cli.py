import json
import subprocess
import sys

import pytest
import yaml

from hallforce import cli
from hallforce.cli import run

from cli_chain import SMALL_CONFIG, run_chain


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    base = tmp_path_factory.mktemp("chain")
    return base, run_chain(base / "a")


def test_chain_outputs(chain):
    _, files = chain
    expected = {
        "field.csv", "sweep.csv", "pareto.csv", "selected_design.yaml", "dataset.csv", "grbf_model.json",
        "gru2_model.json", "gru3_model.json", "metrics.csv", "error_histogram.csv", "sweep_report.svg",
        "sweep_report.csv", "timeseries_report.svg", "timeseries_report.csv",
    }
    assert expected <= set(files)
    assert all(f"manifest_{c.replace('-', '_')}.yaml" in files for c in cli.SUBCOMMANDS)
    assert files["sweep.csv"].startswith(b"# manifest_sha256: ")
    assert b"<!-- manifest_sha256: " in files["sweep_report.svg"]
    assert "manifest_sha256" in json.loads(files["grbf_model.json"])
    metrics = files["metrics.csv"].decode().splitlines()
    assert [r.split(",")[0] for r in metrics[2:]] == ["ideal_grbf", "gru_2axis", "gru_3axis"]


def test_selected_design_has_beam_check(chain):
    _, files = chain
    doc = yaml.safe_load(files["selected_design.yaml"].split(b"\n", 1)[1])
    check = doc["beam_check"]
    assert check["solver_tip_deflection_m"] == pytest.approx(check["linear_tip_deflection_m"], rel=1e-4)
    assert doc["force_range_n"][0] >= 100.0


def test_chain_is_deterministic(chain):
    base, first = chain
    second = run_chain(base / "b")
    assert first == second


def test_parallel_and_out_do_not_change_outputs(chain, tmp_path):
    base, first = chain
    cfg = tmp_path / "run.yaml"
    cfg.write_text(SMALL_CONFIG)
    assert run(["sweep", "--config", str(cfg), "--out", str(tmp_path / "p"), "--parallel", "2"]) == 0
    assert (tmp_path / "p" / "sweep.csv").read_bytes() == first["sweep.csv"]


def reference_config(tmp_path, extra=""):
    cfg = tmp_path / "ref.yaml"
    cfg.write_text(SMALL_CONFIG.replace("design: selected", "design: reference") + extra)
    return cfg


def test_seed_changes_manifest(tmp_path):
    cfg = reference_config(tmp_path)
    run(["field", "--config", str(cfg), "--out", str(tmp_path / "s1")])
    run(["field", "--config", str(cfg), "--out", str(tmp_path / "s2"), "--seed", "11"])
    a = (tmp_path / "s1" / "field.csv").read_text().splitlines()
    b = (tmp_path / "s2" / "field.csv").read_text().splitlines()
    assert a[0] != b[0] and a[1:] == b[1:]


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("sweep:\n  gapp: 1.0e-3\n")
    assert run(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "bad.yaml:2" in err and "gap" in err
    assert not (tmp_path / "o").exists()


def test_usage_errors():
    assert run([]) == 2
    assert run(["frobnicate"]) == 2
    assert run(["sweep", "--parallel", "x"]) == 2
    assert run(["sweep", "--parallel", "0"]) == 1


def test_missing_input_is_reported(tmp_path, capsys):
    assert run(["select", "--out", str(tmp_path)]) == 1
    assert "sweep results not found" in capsys.readouterr().err


def test_failure_restores_previous_outputs(tmp_path):
    out = tmp_path / "o"
    assert run(["field", "--config", str(reference_config(tmp_path)), "--out", str(out)]) == 0
    before = (out / "field.csv").read_bytes()
    # second point sits on the magnet face, so the run fails after nothing else changed
    bad = tmp_path / "bad.yaml"
    bad.write_text(reference_config(tmp_path).read_text().replace("[1.0e-3, 0.0, 0.0]", "[0.0, 0.0, 1.5e-3]"))
    assert run(["field", "--config", str(bad), "--out", str(out)]) == 1
    assert (out / "field.csv").read_bytes() == before
    assert sorted(p.name for p in out.iterdir()) == ["field.csv", "manifest_field.yaml"]


def test_rollback_restores_overwritten_file(tmp_path):
    out = cli.Outputs(tmp_path, "0" * 64)
    (tmp_path / "a.csv").write_text("old\n")
    out.write("a.csv", "new\n")
    out.write("b.csv", "new\n")
    out.rollback()
    assert (tmp_path / "a.csv").read_text() == "old\n"
    assert not (tmp_path / "b.csv").exists()


def test_selection_failure_lists_nearest(tmp_path, capsys):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(SMALL_CONFIG.replace("min_range: 100.0", "min_range: 1.0e6"))
    out = str(tmp_path / "o")
    assert run(["sweep", "--config", str(cfg), "--out", out]) == 0
    assert run(["select", "--config", str(cfg), "--out", out]) == 1
    assert "nearest candidates" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "hallforce", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "sweep" in res.stdout
