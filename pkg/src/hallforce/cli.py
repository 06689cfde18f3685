"""Command-line entry point: ``hallforce <subcommand> [--config ...]``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np
import yaml

from . import design_search, flexure, report, transducer
from .config import RunConfig, default_config, parse_config
from .errors import ConfigurationError, SelectionError
from .inverse import dataset as ds_mod
from .inverse import evaluation, grbf, gru
from .inverse.benchmark import reference_unit
from .inverse.hysteresis import HysteresisConfig
from .magnetostatics import TESLA_TO_GAUSS, field, field_local

SUBCOMMANDS = ("field", "sweep", "select", "dataset", "fit-grbf", "train-gru", "evaluate", "report")
MODEL_FILES = {"ideal_grbf": "grbf_model.json", "gru_2axis": "gru2_model.json", "gru_3axis": "gru3_model.json"}
# keys that only say where or how fast to run; left out of the manifest hash
NON_RESULT_KEYS = ("out", "parallel")


class Outputs:
    """Atomic writes stamped with the manifest hash; removes everything it
    wrote if the run fails."""

    def __init__(self, out_dir: Path, digest: str):
        self.dir = out_dir
        self.digest = digest
        self.written: list[Path] = []
        self.previous: dict[Path, bytes] = {}

    def _stamp(self, name: str, text: str) -> str:
        tag = f"manifest_sha256: {self.digest}"
        if name.endswith(".svg"):
            decl, rest = text.split("\n", 1)
            return f"{decl}\n<!-- {tag} -->\n{rest}"
        if name.endswith(".json"):
            return text  # stamped as a field by the caller
        return f"# {tag}\n{text}"

    def write(self, name: str, text: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / name
        if path.exists() and path not in self.previous and path not in self.written:
            self.previous[path] = path.read_bytes()
        fd, tmp = tempfile.mkstemp(dir=self.dir, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(self._stamp(name, text))
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.written.append(path)
        return path

    def write_json(self, name: str, obj: dict) -> Path:
        obj = dict(obj)
        obj["manifest_sha256"] = self.digest
        return self.write(name, json.dumps(obj, sort_keys=True, indent=1) + "\n")

    def rollback(self) -> None:
        """Delete new files and restore the ones this run overwrote."""
        for p in self.written:
            if p in self.previous:
                p.write_bytes(self.previous[p])
                continue
            try:
                p.unlink()
            except FileNotFoundError:
                pass
        self.written.clear()
        self.previous.clear()


def manifest(cfg: RunConfig, command: str) -> tuple[dict, str]:
    body = {"subcommand": command, "config": {k: v for k, v in cfg.data.items() if k not in NON_RESULT_KEYS}}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return body, hashlib.sha256(text.encode()).hexdigest()


def _read(path: Path, what: str) -> str:
    if not path.exists():
        raise ConfigurationError(f"{what} not found at {path}; run the producing subcommand first")
    return path.read_text()


# ---------------------------------------------------------------------------
# helpers


def sensor_spec(cfg: RunConfig) -> transducer.SensorSpec:
    return transducer.SensorSpec(**{k: float(v) for k, v in cfg["sensor"].items()})


def resolve_design(spec, cfg: RunConfig, out_dir: Path) -> transducer.SensingUnitSpec:
    if spec == "inherit":
        spec = cfg["design"]
    if spec == "reference":
        return reference_unit()
    if spec == "selected":
        doc = yaml.safe_load(_read(out_dir / "selected_design.yaml", "selected design"))
        return ds_mod.unit_from_dict(doc["design"])
    if isinstance(spec, dict):
        return ds_mod.unit_from_dict(spec)
    raise ConfigurationError(f"design must be 'reference', 'selected', 'inherit' or a mapping, got {spec!r}")


def _floats(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([v if isinstance(v, str) else repr(float(v)) for v in r])
    return buf.getvalue()


def load_dataset(out_dir: Path) -> ds_mod.Dataset:
    return ds_mod.read_dataset_csv(io.StringIO(_read(out_dir / "dataset.csv", "dataset")))


def load_model(path: Path):
    d = json.loads(path.read_text())
    fmt = d.get("format")
    if fmt == grbf.MODEL_FORMAT:
        return grbf.GRBFModel.from_dict(d)
    if fmt == gru.MODEL_FORMAT:
        return gru.GRUModel.from_dict(d)
    raise ConfigurationError(f"{path}: unknown model format {fmt!r}")


def _profile(cfg: RunConfig, unit, sensor) -> ds_mod.LoadProfile:
    d = cfg["dataset"]
    amp = d["amplitude"]
    if amp is None:
        fr = transducer.force_range(unit, sensor)
        f = float(d["amplitude_fraction"])
        amp = (round(f * fr.x, 6), round(f * fr.z, 6))
    if len(amp) != 2:
        raise ConfigurationError("dataset.amplitude must have two entries")
    return ds_mod.LoadProfile(
        duration=float(d["duration"]),
        base_frequency=float(d["base_frequency"]),
        frequency_spread=float(d["frequency_spread"]),
        amplitude=(float(amp[0]), float(amp[1])),
        envelope_period=float(d["envelope_period"]),
        min_fraction=float(d["min_fraction"]),
        gt_rate=float(d["gt_rate"]),
    )


def _effects(cfg: RunConfig) -> ds_mod.Effects:
    d = cfg["dataset"]
    h = d["hysteresis"]
    e = d["external"]
    ext = ds_mod.ExternalSchedule(
        count=int(e["count"]),
        duration=float(e["duration"]),
        magnitude=tuple(float(v) for v in e["magnitude"]),
        ramp=float(e["ramp"]),
        episodes=tuple(tuple(float(v) for v in ep) for ep in e["episodes"]),
        ambient=tuple(float(v) for v in e["ambient"]),
    )
    return ds_mod.Effects(
        noise=bool(d["noise"]),
        hysteresis=HysteresisConfig(float(h["alpha"]), float(h["beta"]), float(h["gamma"]), float(h["n"])),
        external=ext,
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_field(cfg, out: Outputs, args):
    unit = resolve_design(cfg["design"], cfg, out.dir)
    pts = np.asarray(cfg["field"]["points"], dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ConfigurationError("field.points must be a list of [x, y, z] triples")
    frame = cfg["field"]["frame"]
    if frame == "sensor":
        b = field(unit.magnet, unit.magnet_pose(), pts)
    elif frame == "magnet":
        b = field_local(unit.magnet, pts)
    else:
        raise ConfigurationError("field.frame must be 'sensor' or 'magnet'")
    rows = [("x_m", "y_m", "z_m", "bx_g", "by_g", "bz_g")]
    rows += [(*p, *(v * TESLA_TO_GAUSS)) for p, v in zip(pts, b)]
    out.write("field.csv", _floats(rows))


def _sweep_config(cfg: RunConfig) -> design_search.SweepConfig:
    d = dict(cfg["sweep"])
    d["parallel"] = cfg.parallel
    d["seed"] = cfg.seed
    d["sensor"] = cfg["sensor"]
    return design_search.sweep_config_from_dict(d)


def cmd_sweep(cfg, out: Outputs, args):
    sc = _sweep_config(cfg)
    results = design_search.sweep(sc)
    out.write("sweep.csv", design_search.results_csv_text(results))
    front = design_search.pareto_front([m for _, m in results], sc.objectives)
    rows = [("index",)] + [(str(results[i][0].index),) for i in front]
    out.write("pareto.csv", _floats(rows))


def cmd_select(cfg, out: Outputs, args):
    results = design_search.read_results_csv(io.StringIO(_read(out.dir / "sweep.csv", "sweep results")))
    r = cfg["select"]
    req = design_search.Requirements(
        float(r["min_sensitivity"]), float(r["min_range"]), float(r["max_deflection"]), float(r["min_gap"])
    )
    try:
        cand, metrics = design_search.select_design(results, req)
    except SelectionError as exc:
        near = ", ".join(str(c.index) for c in exc.nearest)
        raise SelectionError(f"{exc}; nearest candidates: {near}") from None
    unit = cand.unit()
    beam = unit.longitudinal_beam
    load = metrics.force_range[1]
    state = flexure.solve_von_karman(beam, load, paper_literal=bool(cfg["paper_literal"]))
    doc = {
        "candidate_index": cand.index,
        "design": ds_mod.design_dict(unit),
        "force_sensitivity_g_per_n": list(metrics.force_sensitivity),
        "force_range_n": list(metrics.force_range),
        "binding_constraint": metrics.binding_constraint,
        "requirements": asdict(req),
        "beam_check": {
            "load_type": state.load_type,
            "load_n": load,
            "linear_tip_deflection_m": flexure.tip_deflection(load, beam),
            "solver_tip_deflection_m": state.tip_deflection,
            "tip_axial_displacement_m": float(state.u[-1]),
            "stretching": "printed relation" if cfg["paper_literal"] else "membrane strain",
        },
    }
    out.write("selected_design.yaml", yaml.safe_dump(ds_mod._plain(doc), sort_keys=True))


def cmd_dataset(cfg, out: Outputs, args):
    unit = resolve_design(cfg["dataset"]["design"], cfg, out.dir)
    sensor = sensor_spec(cfg)
    data = ds_mod.synthesize_dataset(
        unit, sensor, _profile(cfg, unit, sensor), _effects(cfg), cfg.seed, float(cfg["dataset"]["train_fraction"])
    )
    out.write("dataset.csv", ds_mod.dataset_csv_text(data))


def cmd_fit_grbf(cfg, out: Outputs, args):
    data = load_dataset(out.dir)
    g = cfg["grbf"]
    if g["source"] == "ideal":
        meta = data.metadata
        unit = ds_mod.unit_from_dict(meta["design"])
        sensor = transducer.SensorSpec(**meta["sensor"])
        p = dict(meta["profile"])
        p["amplitude"] = tuple(p["amplitude"])
        ideal = ds_mod.synthesize_dataset(
            unit, sensor, ds_mod.LoadProfile(**p), ds_mod.IDEAL, cfg.seed + 10_000, meta["train_fraction"]
        )
        model = grbf.grbf_fit(ideal, int(g["centers"]), float(g["ridge"]), split=None)
    elif g["source"] == "dataset":
        model = grbf.grbf_fit(data, int(g["centers"]), float(g["ridge"]), split="train")
    else:
        raise ConfigurationError("grbf.source must be 'ideal' or 'dataset'")
    out.write_json("grbf_model.json", model.to_dict())


def cmd_train_gru(cfg, out: Outputs, args):
    data = load_dataset(out.dir)
    g = dict(cfg["gru"])
    widths = [int(w) for w in g.pop("input_axes")]
    if not widths or any(w not in (2, 3) for w in widths):
        raise ConfigurationError("gru.input_axes must list widths 2 and/or 3")
    for w in sorted(set(widths)):
        conf = gru.GRUConfig(input_axes=w, seed=cfg.seed, **g)
        model = gru.gru_train(data, conf)
        out.write_json(f"gru{w}_model.json", model.to_dict())


def cmd_evaluate(cfg, out: Outputs, args):
    data = load_dataset(out.dir)
    e = cfg["evaluate"]
    named, errors = {}, {}
    for name, fname in MODEL_FILES.items():
        path = out.dir / fname
        if path.exists():
            m, err = evaluation.evaluate(load_model(path), data, split=e["split"])
            named[name], errors[name] = m, err
    if not named:
        raise ConfigurationError(f"no model files found in {out.dir}")
    out.write("metrics.csv", evaluation.metrics_csv_text(named, timing=bool(e["timing"])))
    out.write("error_histogram.csv", evaluation.histogram_csv_text(errors, int(e["bins"])))


def cmd_report(cfg, out: Outputs, args):
    made = False
    sweep_path = out.dir / "sweep.csv"
    if sweep_path.exists():
        rows = list(csv.DictReader(l for l in sweep_path.read_text().splitlines(True) if not l.startswith("#")))
        svg, table = report.sweep_report(rows, bool(cfg["report"]["log_axes"]))
        out.write("sweep_report.svg", svg)
        out.write("sweep_report.csv", table)
        made = True
    if (out.dir / "dataset.csv").exists() and any((out.dir / f).exists() for f in MODEL_FILES.values()):
        data = load_dataset(out.dir).subset(cfg["evaluate"]["split"])
        k = {"x": 0, "z": 1}[cfg["report"]["axis"]]
        mask = data.gt_marker
        series, sigma = {}, None
        for name, fname in MODEL_FILES.items():
            path = out.dir / fname
            if not path.exists():
                continue
            pred = evaluation.predict(load_model(path), data.readings)
            series[name] = pred.force[mask, k]
            if pred.sigma is not None and name == "gru_3axis":
                sigma = (name, pred.sigma[mask, k])
        svg, table = report.timeseries_report(
            data.time[mask], data.force[mask, k], series, sigma, axis_label=f"F_{cfg['report']['axis']}"
        )
        out.write("timeseries_report.svg", svg)
        out.write("timeseries_report.csv", table)
        made = True
    if not made:
        raise ConfigurationError(f"nothing to report in {out.dir}: need sweep.csv or dataset.csv with models")


COMMANDS = {
    "field": cmd_field,
    "sweep": cmd_sweep,
    "select": cmd_select,
    "dataset": cmd_dataset,
    "fit-grbf": cmd_fit_grbf,
    "train-gru": cmd_train_gru,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--parallel", type=int, help="worker processes for the sweep")
    common.add_argument("--paper-literal", action="store_true", help="use the printed stretching relation")
    parser = argparse.ArgumentParser(prog="hallforce", description="Hall-effect force sensor design toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(args) -> RunConfig:
    cfg = parse_config(args.config) if args.config else RunConfig(default_config())
    if args.seed is not None and not 0 <= args.seed < 2**64:
        raise ConfigurationError("--seed must be an unsigned 64-bit integer")
    if args.parallel is not None and args.parallel < 1:
        raise ConfigurationError("--parallel must be >= 1")
    return cfg.with_overrides(
        seed=args.seed, out=args.out, parallel=args.parallel, paper_literal=True if args.paper_literal else None
    )


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
    except Exception as exc:
        print(f"hallforce {args.command}: {exc}", file=sys.stderr)
        return 1
    body, digest = manifest(cfg, args.command)
    out = Outputs(Path(cfg.out), digest)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", flexure.SlenderBeamWarning)
            COMMANDS[args.command](cfg, out, args)
        out.write(f"manifest_{args.command.replace('-', '_')}.yaml", yaml.safe_dump(body, sort_keys=True))
    except Exception as exc:
        out.rollback()
        print(f"hallforce {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
