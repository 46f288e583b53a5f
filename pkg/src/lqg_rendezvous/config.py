"""Scenario files: TOML parsing, validation, presets and canonical hashing.

A scenario file is a TOML document with ``schema_version = 1``.  Required
keys are ``n`` and ``initial_states``; everything else has a default.
Unknown keys are rejected so typos do not silently fall back to defaults.
"""
from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .control import CostWeights
from .dynamics import DriveParams, NoiseSpec, RobotState
from .errors import ConfigurationError
from .graph import Topology
from .sim import ScenarioConfig

SCHEMA_VERSION = 1

_TOP_KEYS = {
    "schema_version", "name", "n", "h", "epsilon", "max_steps", "master_seed", "monte_carlo_runs",
    "gain_mode", "initial_covariance", "stop_on_convergence", "initial_states", "initial_estimates",
    "target", "noise", "topology", "weights", "drive",
}
_NOISE_KEYS = {"process_var_x", "process_var_y", "meas_var_odom", "meas_var_imu"}
_DRIVE_KEYS = {"wheelbase", "wheel_speed_limit", "heading_gain"}
_WEIGHT_KEYS = {"q_state", "r_input", "q_terminal", "horizon"}
_TOPOLOGY_KEYS = {"preset", "adjacency", "schedule"}


def preset_names() -> list[str]:
    files = resources.files(__package__).joinpath("scenarios").iterdir()
    return sorted(f.name[:-5] for f in files if f.name.endswith(".toml"))


def _reject_unknown(table: Mapping, allowed: set, where: str) -> None:
    extra = sorted(set(table) - allowed)
    if extra:
        raise ConfigurationError(f"{where}: unknown key(s) {', '.join(map(repr, extra))}")


def _number(d: Mapping, key: str, default, where: str, kind=float):
    if key not in d:
        if default is ...:
            raise ConfigurationError(f"{where}missing required field {key!r}")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigurationError(f"{where}{key}: expected a number, got {v!r}")
    if kind is int:
        if isinstance(v, float) and not v.is_integer():
            raise ConfigurationError(f"{where}{key}: expected an integer, got {v!r}")
        return int(v)
    return float(v)


def _matrix(v, key: str) -> np.ndarray:
    try:
        m = np.array(v, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{key}: not a numeric matrix") from exc
    return m


def config_from_dict(d: Mapping[str, Any]) -> ScenarioConfig:
    _reject_unknown(d, _TOP_KEYS, "scenario")
    version = d.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigurationError(f"schema_version: unsupported version {version!r}")
    n = _number(d, "n", ..., "", int)
    if "initial_states" not in d:
        raise ConfigurationError("missing required field 'initial_states'")
    states = []
    for i, row in enumerate(d["initial_states"]):
        if not isinstance(row, (list, tuple)) or len(row) not in (2, 3):
            raise ConfigurationError(f"initial_states[{i}]: expected [x, y] or [x, y, theta]")
        states.append(RobotState(*map(float, row)))

    noise_d = d.get("noise", {})
    _reject_unknown(noise_d, _NOISE_KEYS, "noise")
    noise = NoiseSpec(**{k: _number(noise_d, k, getattr(NoiseSpec, k), "noise.") for k in _NOISE_KEYS})
    drive_d = d.get("drive", {})
    _reject_unknown(drive_d, _DRIVE_KEYS, "drive")
    drive = DriveParams(**{k: _number(drive_d, k, getattr(DriveParams, k), "drive.") for k in _DRIVE_KEYS})

    max_steps = _number(d, "max_steps", 600, "", int)
    w = d.get("weights", {})
    _reject_unknown(w, _WEIGHT_KEYS, "weights")
    weights = CostWeights.scalar(
        _number(w, "q_state", 1.0, "weights."), _number(w, "r_input", 1.0, "weights."),
        _number(w, "q_terminal", 1.0, "weights."), _number(w, "horizon", max_steps, "weights.", int))

    topo_d = d.get("topology", {"preset": "complete"})
    _reject_unknown(topo_d, _TOPOLOGY_KEYS, "topology")
    if ("preset" in topo_d) == ("adjacency" in topo_d):
        raise ConfigurationError("topology: give exactly one of 'preset' or 'adjacency'")
    base = Topology.preset(topo_d["preset"], n) if "preset" in topo_d else None
    adjacency = base.adjacency if base is not None else _matrix(topo_d["adjacency"], "topology.adjacency")
    schedule = {}
    for i, entry in enumerate(topo_d.get("schedule", [])):
        _reject_unknown(entry, {"step", "adjacency"}, f"topology.schedule[{i}]")
        step = _number(entry, "step", ..., f"topology.schedule[{i}].", int)
        schedule[step] = _matrix(entry.get("adjacency"), f"topology.schedule[{i}].adjacency")
    topology = Topology(n, adjacency, schedule)

    est0 = d.get("initial_estimates")
    target = d.get("target")
    return ScenarioConfig(
        n=n,
        initial_states=tuple(states),
        h=_number(d, "h", 0.1, ""),
        initial_estimates=None if est0 is None else _matrix(est0, "initial_estimates"),
        initial_covariance=_number(d, "initial_covariance", 1e-6, ""),
        noise=noise,
        topology=topology,
        weights=weights,
        gain_mode=str(d.get("gain_mode", "local")),
        drive=drive,
        epsilon=_number(d, "epsilon", 0.005, ""),
        max_steps=max_steps,
        master_seed=_number(d, "master_seed", 0, "", int),
        monte_carlo_runs=_number(d, "monte_carlo_runs", 200, "", int),
        stop_on_convergence=bool(d.get("stop_on_convergence", True)),
        target=None if target is None else tuple(float(t) for t in target),
        name=str(d.get("name", "custom")),
    )


def loads_scenario(text: str, source: str = "<string>") -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"parse error in {source}: {exc}") from exc
    return config_from_dict(data)


def load_scenario(path_or_preset) -> ScenarioConfig:
    """Load a scenario from a TOML file, or a bundled preset by name."""
    name = str(path_or_preset)
    if name in preset_names():
        text = resources.files(__package__).joinpath("scenarios").joinpath(f"{name}.toml").read_text()
        return loads_scenario(text, f"preset {name}")
    path = Path(name)
    if not path.is_file():
        raise ConfigurationError(f"scenario {name!r} is neither a file nor a preset ({', '.join(preset_names())})")
    return loads_scenario(path.read_text(), str(path))


def config_to_dict(config: ScenarioConfig) -> dict:
    """Canonical plain-data form of a config (round-trips through ``config_from_dict``)."""
    topo = config.topology
    out = {
        "schema_version": SCHEMA_VERSION,
        "name": config.name,
        "n": config.n,
        "h": config.h,
        "epsilon": config.epsilon,
        "max_steps": config.max_steps,
        "master_seed": config.master_seed,
        "monte_carlo_runs": config.monte_carlo_runs,
        "gain_mode": config.gain_mode,
        "initial_covariance": config.initial_covariance,
        "stop_on_convergence": config.stop_on_convergence,
        "initial_states": [[s.x, s.y, s.theta] for s in config.initial_states],
        "initial_estimates": config.initial_estimates.tolist(),
        "target": list(config.target),
        "noise": {k: getattr(config.noise, k) for k in sorted(_NOISE_KEYS)},
        "topology": {
            "adjacency": topo.adjacency.tolist(),
            "schedule": [{"step": k, "adjacency": a.tolist()} for k, a in sorted(topo.schedule.items())],
        },
        "weights": {
            "q_state": float(config.weights.q_state[0, 0]),
            "r_input": float(config.weights.r_input[0, 0]),
            "q_terminal": float(config.weights.q_terminal[0, 0]),
            "horizon": config.weights.horizon,
        },
        "drive": {k: getattr(config.drive, k) for k in sorted(_DRIVE_KEYS)},
    }
    return out


def config_hash(config: ScenarioConfig) -> str:
    canon = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
