"""Strict YAML run configuration with line-anchored errors."""
from __future__ import annotations

import copy
import difflib
import hashlib
import json
import re
from dataclasses import dataclass, field as dc_field
from importlib import resources
from pathlib import Path

import yaml

from .errors import ConfigurationError

class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-3`` (no dot) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)


def load_yaml(text: str):
    return yaml.load(text, Loader=_Loader)


# Schema leaves are python types (or tuples of them); dicts nest.
NUM = (int, float)

BEAM = {"material": str, "length": NUM, "thickness": NUM, "width": NUM, "max_deflection_cap": NUM}
DESIGN = {
    "lateral_beam": BEAM,
    "longitudinal_beam": BEAM,
    "magnet": {
        "shape": str,
        "diameter": NUM,
        "length": NUM,
        "remanence": NUM,
        "inner_diameter": NUM,
        "demag_multiplier": NUM,
    },
    "gap": NUM,
    "include_tilt": bool,
    "allow_small_gap": bool,
}
AXIS = {"start": NUM, "stop": NUM, "steps": int}
SENSOR = {"range": NUM, "resolution": NUM, "noise_sigma": NUM, "sample_rate": NUM}

SCHEMA = {
    "seed": int,
    "out": str,
    "parallel": int,
    "paper_literal": bool,
    "design": (str, DESIGN),
    "sensor": SENSOR,
    "field": {"points": list, "frame": str},
    "sweep": {
        "magnet_diameter": AXIS,
        "magnet_length": AXIS,
        "beam_thickness": AXIS,
        "beam_length": AXIS,
        "materials": list,
        "beam_width": NUM,
        "shape": str,
        "remanence": NUM,
        "gap": NUM,
        "max_deflection_cap": NUM,
        "stress_ratio": NUM,
        "life_threshold": NUM,
        "objectives": list,
        "material_library": (str, type(None)),
    },
    "select": {"min_sensitivity": NUM, "min_range": NUM, "max_deflection": NUM, "min_gap": NUM},
    "dataset": {
        "design": (str, DESIGN),
        "duration": NUM,
        "base_frequency": NUM,
        "frequency_spread": NUM,
        "amplitude": (list, type(None)),
        "amplitude_fraction": NUM,
        "envelope_period": NUM,
        "min_fraction": NUM,
        "gt_rate": NUM,
        "train_fraction": NUM,
        "noise": bool,
        "hysteresis": {"alpha": NUM, "beta": NUM, "gamma": NUM, "n": NUM},
        "external": {
            "count": int,
            "duration": NUM,
            "magnitude": list,
            "ramp": NUM,
            "episodes": list,
            "ambient": list,
        },
    },
    "grbf": {"centers": int, "ridge": NUM, "source": str},
    "gru": {
        "layers": int,
        "hidden": int,
        "window": int,
        "epochs": int,
        "learning_rate": NUM,
        "batch": int,
        "input_axes": list,
        "clip": NUM,
        "lr_decay": NUM,
    },
    "evaluate": {"timing": bool, "bins": int, "split": str},
    "report": {"log_axes": bool, "axis": str},
}


def default_config() -> dict:
    text = resources.files("hallforce.data").joinpath("run_default.yaml").read_text()
    return load_yaml(text)


def _where(node, source) -> str:
    return f"{source}:{node.start_mark.line + 1}"


def _type_name(t) -> str:
    if isinstance(t, tuple):
        return " or ".join(_type_name(x) for x in t if not isinstance(x, dict)) or "mapping"
    if isinstance(t, dict):
        return "mapping"
    return {int: "integer", float: "number", str: "string", bool: "boolean", list: "list"}.get(t, t.__name__)


def _check(node, value, schema, path, source):
    if isinstance(schema, tuple) and any(isinstance(s, dict) for s in schema):
        sub = next(s for s in schema if isinstance(s, dict))
        if isinstance(value, dict):
            return _check(node, value, sub, path, source)
        scalars = tuple(s for s in schema if not isinstance(s, dict))
        return _check(node, value, scalars, path, source)
    if isinstance(schema, dict):
        if not isinstance(value, dict):
            raise ConfigurationError(f"{_where(node, source)}: {path or 'config'} must be a mapping")
        children = {k.value: (k, v) for k, v in node.value} if isinstance(node, yaml.MappingNode) else {}
        for key, val in value.items():
            knode, vnode = children.get(key, (node, node))
            if key not in schema:
                near = difflib.get_close_matches(str(key), list(schema), n=1)
                hint = f"; did you mean {near[0]!r}?" if near else ""
                where = f"{path}." if path else ""
                raise ConfigurationError(f"{_where(knode, source)}: unknown key {where}{key}{hint}")
            _check(vnode, val, schema[key], f"{path}.{key}" if path else str(key), source)
        return
    types = schema if isinstance(schema, tuple) else (schema,)
    ok = isinstance(value, types) and not (isinstance(value, bool) and bool not in types)
    if not ok:
        raise ConfigurationError(f"{_where(node, source)}: {path} must be {_type_name(schema)}, got {type(value).__name__}")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration: documented defaults overlaid by the file."""

    data: dict = dc_field(default_factory=default_config)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def out(self) -> str:
        return self.data["out"]

    @property
    def parallel(self) -> int:
        return int(self.data["parallel"])

    def with_overrides(self, **kw) -> "RunConfig":
        return RunConfig(_merge(self.data, {k: v for k, v in kw.items() if v is not None}))

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True)

    def digest(self) -> str:
        text = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    try:
        node = yaml.compose(text, Loader=_Loader)
        value = load_yaml(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark else ""
        raise ConfigurationError(f"{source}{line}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
    if value is None:
        value = {}
    _check(node, value, SCHEMA, "", source)
    merged = _merge(default_config(), value)
    return RunConfig(merged)


def parse_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config_text(text, str(p))
