"""Shared helper: run the full CLI chain with a small configuration."""
from pathlib import Path

from hallforce.cli import run

SMALL_CONFIG = """\
seed: 3
design: selected
sweep:
  magnet_diameter: {start: 2.0e-3, stop: 4.0e-3, steps: 3}
  magnet_length: {start: 2.0e-3, stop: 6.0e-3, steps: 3}
  beam_thickness: {start: 2.0e-3, stop: 6.0e-3, steps: 3}
  beam_length: {start: 30.0e-3, stop: 45.0e-3, steps: 2}
select: {min_range: 100.0}
dataset:
  duration: 10.0
  external: {count: 2, duration: 1.0}
grbf: {centers: 50}
gru: {hidden: 8, epochs: 2, window: 50}
field: {points: [[0.0, 0.0, 0.0], [1.0e-3, 0.0, 0.0]]}
"""

CHAIN = ("sweep", "select", "field", "dataset", "fit-grbf", "train-gru", "evaluate", "report")


def run_chain(workdir: Path, config_text: str = SMALL_CONFIG, extra=()) -> dict[str, bytes]:
    workdir.mkdir(parents=True, exist_ok=True)
    cfg = workdir / "run.yaml"
    cfg.write_text(config_text)
    out = workdir / "out"
    for cmd in CHAIN:
        code = run([cmd, "--config", str(cfg), "--out", str(out), *extra])
        if code != 0:
            raise RuntimeError(f"{cmd} exited with {code}")
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}
