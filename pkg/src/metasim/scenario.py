"""Scenario files: JSON schema validation, defaults, serialization.

A scenario fully describes one experiment: grid shape, protocol, delay
model, workload, optional clocked-baseline parameters, metrics options,
and the seed. Parsing fills every default and echoes the normalized form
back, so a report always carries the exact configuration that produced
it. The machine-readable contract lives in schema/scenario.schema.json.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Any

from .kernel import DelayModel, FixedDelay, ScaledDelay, UniformJitter

ENV_SEED = "METASIM_SEED"


class SchemaError(Exception):
    """Scenario text violates the schema; `path` names the first bad field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


DEFAULTS = {
    "grid": {"width": 4, "height": 4, "loads_per_node": 4},
    "protocol": "four_phase",
    "delays": {"kind": "fixed", "ps": 50},
    "bus_width": 16,
    "setup_margin_ps": 10,
    "node_delay_ps": 20,
    "discovery": True,
    "duration_ps": 0,
    "workload": [],
    "sync": None,
    "metrics": {"bin_width_ps": 100, "c_eff_f": 1e-14, "vdd_v": 1.0},
}

SYNC_DEFAULTS = {
    "period_ps": 10_000,
    "skew_per_level_ps": 0,
    "setup_ps": 100,
    "hold_ps": 100,
    "hop_delay_ps": 1000,
}

_OPCODES = ("SET_IMPEDANCE", "REPORT")


def _expect(cond: bool, path: str, message: str):
    if not cond:
        raise SchemaError(path, message)


def _as_int(v, path, lo=None, hi=None) -> int:
    _expect(isinstance(v, int) and not isinstance(v, bool), path, "expected an integer")
    if lo is not None:
        _expect(v >= lo, path, f"must be >= {lo}")
    if hi is not None:
        _expect(v <= hi, path, f"must be <= {hi}")
    return v


def _as_number(v, path, lo=None) -> float:
    _expect(
        isinstance(v, (int, float)) and not isinstance(v, bool),
        path,
        "expected a number",
    )
    if lo is not None:
        _expect(v > lo, path, f"must be > {lo}")
    return float(v)


def _as_obj(v, path) -> dict:
    _expect(isinstance(v, dict), path, "expected an object")
    return v


def _check_keys(obj: dict, allowed, path: str):
    for k in obj:
        _expect(k in allowed, f"{path}.{k}", "unknown field")


def _validate_delays(spec, path: str) -> dict:
    spec = _as_obj(spec, path)
    kind = spec.get("kind")
    _expect(
        kind in ("fixed", "uniform", "scaled"),
        f"{path}.kind",
        "expected fixed | uniform | scaled",
    )
    if kind == "fixed":
        _check_keys(spec, {"kind", "ps"}, path)
        return {"kind": "fixed", "ps": _as_int(spec.get("ps", 50), f"{path}.ps", lo=1)}
    if kind == "uniform":
        _check_keys(spec, {"kind", "lo_ps", "hi_ps"}, path)
        lo = _as_int(spec.get("lo_ps"), f"{path}.lo_ps", lo=1)
        hi = _as_int(spec.get("hi_ps"), f"{path}.hi_ps", lo=1)
        _expect(lo <= hi, f"{path}.hi_ps", "must be >= lo_ps")
        return {"kind": "uniform", "lo_ps": lo, "hi_ps": hi}
    _check_keys(spec, {"kind", "factor", "base"}, path)
    factor = _as_number(spec.get("factor"), f"{path}.factor", lo=0)
    base = _validate_delays(spec.get("base"), f"{path}.base")
    return {"kind": "scaled", "factor": factor, "base": base}


def delay_model_from_config(spec: dict) -> DelayModel:
    if spec["kind"] == "fixed":
        return FixedDelay(spec["ps"])
    if spec["kind"] == "uniform":
        return UniformJitter(spec["lo_ps"], spec["hi_ps"])
    return ScaledDelay(delay_model_from_config(spec["base"]), spec["factor"])


@dataclass(frozen=True)
class Scenario:
    """A validated, fully-defaulted experiment description."""

    config: dict  # normalized form; serializing and re-parsing is identity

    @property
    def width(self) -> int:
        return self.config["grid"]["width"]

    @property
    def height(self) -> int:
        return self.config["grid"]["height"]

    @property
    def seed(self) -> int:
        return self.config["seed"]

    def delay_model(self) -> DelayModel:
        return delay_model_from_config(self.config["delays"])

    def serialize(self) -> str:
        return json.dumps(self.config, indent=2, sort_keys=True)


def default_seed() -> int:
    env = os.environ.get(ENV_SEED)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise SchemaError(ENV_SEED, f"not an integer: {env!r}") from None
    return 0


def validate_scenario(raw: Any) -> Scenario:
    """Validate a decoded JSON document and fill every default."""
    raw = _as_obj(raw, "$")
    _check_keys(raw, set(DEFAULTS) | {"seed"}, "$")

    cfg: dict = {}
    grid = _as_obj(raw.get("grid", DEFAULTS["grid"]), "grid")
    _check_keys(grid, {"width", "height", "loads_per_node"}, "grid")
    width = _as_int(grid.get("width", 4), "grid.width", lo=1, hi=1024)
    height = _as_int(grid.get("height", 4), "grid.height", lo=1, hi=1024)
    loads = _as_int(grid.get("loads_per_node", 4), "grid.loads_per_node", lo=1, hi=16)
    cfg["grid"] = {"width": width, "height": height, "loads_per_node": loads}

    protocol = raw.get("protocol", DEFAULTS["protocol"])
    _expect(
        protocol in ("four_phase", "two_phase"),
        "protocol",
        "expected four_phase | two_phase",
    )
    cfg["protocol"] = protocol
    cfg["delays"] = _validate_delays(raw.get("delays", DEFAULTS["delays"]), "delays")
    cfg["bus_width"] = _as_int(raw.get("bus_width", 16), "bus_width", lo=1, hi=64)
    cfg["setup_margin_ps"] = _as_int(
        raw.get("setup_margin_ps", 10), "setup_margin_ps", lo=0
    )
    cfg["node_delay_ps"] = _as_int(raw.get("node_delay_ps", 20), "node_delay_ps", lo=1)
    discovery = raw.get("discovery", True)
    _expect(isinstance(discovery, bool), "discovery", "expected a boolean")
    cfg["discovery"] = discovery
    cfg["duration_ps"] = _as_int(raw.get("duration_ps", 0), "duration_ps", lo=0)
    seed = raw.get("seed")
    cfg["seed"] = default_seed() if seed is None else _as_int(seed, "seed")

    workload = raw.get("workload", [])
    _expect(isinstance(workload, list), "workload", "expected an array")
    cfg["workload"] = [
        _validate_command(cmd, f"workload[{i}]", width, height, loads)
        for i, cmd in enumerate(workload)
    ]

    sync = raw.get("sync")
    if sync is None:
        cfg["sync"] = None
    else:
        sync = _as_obj(sync, "sync")
        _check_keys(sync, set(SYNC_DEFAULTS), "sync")
        out = {}
        for key, dflt in SYNC_DEFAULTS.items():
            lo = 0 if key == "skew_per_level_ps" else 1
            out[key] = _as_int(sync.get(key, dflt), f"sync.{key}", lo=lo)
        cfg["sync"] = out

    metrics = _as_obj(raw.get("metrics", DEFAULTS["metrics"]), "metrics")
    _check_keys(metrics, {"bin_width_ps", "c_eff_f", "vdd_v"}, "metrics")
    cfg["metrics"] = {
        "bin_width_ps": _as_int(metrics.get("bin_width_ps", 100), "metrics.bin_width_ps", lo=1),
        "c_eff_f": _as_number(metrics.get("c_eff_f", 1e-14), "metrics.c_eff_f", lo=0),
        "vdd_v": _as_number(metrics.get("vdd_v", 1.0), "metrics.vdd_v", lo=0),
    }
    return Scenario(cfg)


def _validate_command(cmd, path: str, width: int, height: int, loads: int) -> dict:
    cmd = _as_obj(cmd, path)
    opcode = cmd.get("opcode", "SET_IMPEDANCE")
    _expect(opcode in _OPCODES, f"{path}.opcode", f"expected one of {_OPCODES}")
    t = _as_int(cmd.get("t_ps", 0), f"{path}.t_ps", lo=0)
    if opcode == "SET_IMPEDANCE":
        _check_keys(cmd, {"opcode", "t_ps", "dest", "load_index", "payload"}, path)
        dest = cmd.get("dest")
        _expect(
            isinstance(dest, list) and len(dest) == 2,
            f"{path}.dest",
            "expected [x, y]",
        )
        x = _as_int(dest[0], f"{path}.dest", lo=0)
        y = _as_int(dest[1], f"{path}.dest", lo=0)
        _expect(x < width and y < height, f"{path}.dest", "outside the grid")
        load = _as_int(cmd.get("load_index", 0), f"{path}.load_index", lo=0)
        _expect(load < loads, f"{path}.load_index", f"node has {loads} loads")
        payload = cmd.get("payload", [0, 0])
        _expect(
            isinstance(payload, list) and len(payload) == 2,
            f"{path}.payload",
            "expected [resistance_code, reactance_code]",
        )
        r = _as_int(payload[0], f"{path}.payload", lo=0, hi=255)
        xc = _as_int(payload[1], f"{path}.payload", lo=0, hi=255)
        return {
            "opcode": opcode,
            "t_ps": t,
            "dest": [x, y],
            "load_index": load,
            "payload": [r, xc],
        }
    _check_keys(cmd, {"opcode", "t_ps", "src", "payload"}, path)
    src = cmd.get("src")
    _expect(isinstance(src, list) and len(src) == 2, f"{path}.src", "expected [x, y]")
    x = _as_int(src[0], f"{path}.src", lo=0)
    y = _as_int(src[1], f"{path}.src", lo=0)
    _expect(x < width and y < height, f"{path}.src", "outside the grid")
    payload = _as_int(cmd.get("payload", 0), f"{path}.payload", lo=0, hi=0xFFFF)
    return {"opcode": opcode, "t_ps": t, "src": [x, y], "payload": payload}


def parse_scenario(text: str) -> Scenario:
    """Parse and validate scenario JSON text."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError("$", f"invalid JSON: {e}") from None
    return validate_scenario(raw)


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as f:
        return parse_scenario(f.read())
