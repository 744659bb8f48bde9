"""JSON run configurations: defaults, validation and object assembly."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .ensemble import EnsembleConfig
from .errors import ConfigError
from .kernel import KernelSpec
from .noise import NoiseConfig
from .solver import GridSpec, InitialData, SolverConfig
from .velocity import StochasticVelocity, VelocityModel

REQUIRED = object()

DEFAULTS = {
    "grid": {"x_min": REQUIRED, "x_max": REQUIRED, "dx": REQUIRED},
    "kernel": {"family": "concave", "eta": REQUIRED},
    "velocity": {"family": "linear", "v_max": 1.0, "rho_max": 1.0},
    "noise": {"tau": 0.0, "delta_r": None, "seed": 0},
    "initial": REQUIRED,
    "sim": {"T": REQUIRED, "output_times": [], "mode": "sNV", "cfl_safety": 1.0},
    "ensemble": {"n_realizations": 100, "quantiles": [0.05, 0.95], "reference": "NV", "batch_size": 32},
    "characteristics": {"t0": 0.0, "starts": None, "linspace": None, "realizations": 30, "interpolate": False},
    "sweep": None,
}

INITIAL_KEYS = {
    "plateau": ("left", "inside", "right", "a", "b"),
    "steps": ("breaks", "values"),
    "sampled": ("x", "rho"),
}

SWEEP_PARAMS = ("tau", "eta")

PRESETS = ("example-3-6", "example-3-7", "table-1", "fig-7-tau-sweep", "fig-7-eta-sweep")


def _fill(section: str, given, defaults):
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise ConfigError(f"{section}: expected an object")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"{section}.{sorted(unknown)[0]}: unknown field")
    out = {}
    for key, default in defaults.items():
        if key in given:
            out[key] = given[key]
        elif default is REQUIRED:
            raise ConfigError(f"{section}.{key}: required field missing")
        else:
            out[key] = copy.deepcopy(default)
    return out


def _number(section: str, key: str, value, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{section}.{key}: expected a finite number, got {value!r}")
    return float(value)


def _resolve_initial(raw):
    if raw is REQUIRED or raw is None:
        raise ConfigError("initial: required section missing")
    if not isinstance(raw, dict) or raw.get("kind") not in INITIAL_KEYS:
        raise ConfigError(f"initial.kind: must be one of {tuple(INITIAL_KEYS)}")
    kind = raw["kind"]
    keys = INITIAL_KEYS[kind]
    missing = [k for k in keys if k not in raw]
    if missing:
        raise ConfigError(f"initial.{missing[0]}: required field missing")
    extra = set(raw) - set(keys) - {"kind"}
    if extra:
        raise ConfigError(f"initial.{sorted(extra)[0]}: unknown field")
    out = {"kind": kind}
    for k in keys:
        v = raw[k]
        out[k] = [_number("initial", k, x) for x in v] if isinstance(v, list) else _number("initial", k, v)
    return out


def resolve(raw: dict) -> dict:
    """Fill defaults and normalise types; the result is JSON-serialisable and a fixed point."""
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown section")
    cfg = {}
    for section, defaults in DEFAULTS.items():
        if section == "initial":
            cfg[section] = _resolve_initial(raw.get(section, REQUIRED))
        elif section == "sweep":
            cfg[section] = _resolve_sweep(raw.get(section))
        else:
            cfg[section] = _fill(section, raw.get(section), defaults)
    for key in ("x_min", "x_max", "dx"):
        cfg["grid"][key] = _number("grid", key, cfg["grid"][key])
    cfg["kernel"]["eta"] = _number("kernel", "eta", cfg["kernel"]["eta"])
    for key in ("v_max", "rho_max"):
        cfg["velocity"][key] = _number("velocity", key, cfg["velocity"][key])
    cfg["noise"]["tau"] = _number("noise", "tau", cfg["noise"]["tau"])
    cfg["noise"]["delta_r"] = _number("noise", "delta_r", cfg["noise"]["delta_r"], allow_none=True)
    seed = cfg["noise"]["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError(f"noise.seed: expected an unsigned 64-bit integer, got {seed!r}")
    sim = cfg["sim"]
    sim["T"] = _number("sim", "T", sim["T"])
    sim["cfl_safety"] = _number("sim", "cfl_safety", sim["cfl_safety"])
    sim["output_times"] = [_number("sim", "output_times", t) for t in sim["output_times"]]
    ens = cfg["ensemble"]
    ens["quantiles"] = [_number("ensemble", "quantiles", q) for q in ens["quantiles"]]
    for key in ("n_realizations", "batch_size"):
        if isinstance(ens[key], bool) or not isinstance(ens[key], int):
            raise ConfigError(f"ensemble.{key}: expected an integer")
    ch = cfg["characteristics"]
    ch["t0"] = _number("characteristics", "t0", ch["t0"])
    if ch["starts"] is not None:
        ch["starts"] = [_number("characteristics", "starts", x) for x in ch["starts"]]
    if ch["linspace"] is not None:
        if len(ch["linspace"]) != 3:
            raise ConfigError("characteristics.linspace: expected [start, stop, count]")
        a, b, n = ch["linspace"]
        ch["linspace"] = [_number("characteristics", "linspace", a), _number("characteristics", "linspace", b), int(n)]
    return cfg


def _resolve_sweep(raw):
    if raw is None:
        return None
    sweep = _fill("sweep", raw, {"param": REQUIRED, "values": REQUIRED})
    if sweep["param"] not in SWEEP_PARAMS:
        raise ConfigError(f"sweep.param: must be one of {SWEEP_PARAMS}")
    sweep["values"] = [_number("sweep", "values", v) for v in sweep["values"]]
    if not sweep["values"]:
        raise ConfigError("sweep.values: needs at least one value")
    return sweep


def build_initial(section: dict) -> InitialData:
    kind = section["kind"]
    if kind == "plateau":
        return InitialData.plateau(section["left"], section["inside"], section["right"], section["a"], section["b"])
    if kind == "steps":
        return InitialData.steps(section["breaks"], section["values"])
    xs = np.asarray(section["x"], dtype=float)
    rs = np.asarray(section["rho"], dtype=float)
    if xs.shape != rs.shape or xs.size < 2 or np.any(np.diff(xs) <= 0):
        raise ConfigError("initial.x: needs at least two increasing points matching initial.rho")
    return InitialData.profile(lambda x: np.interp(x, xs, rs))


@dataclass(frozen=True)
class RunConfig:
    """A resolved configuration together with the simulation objects it describes."""

    data: dict
    solver: SolverConfig

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        data = resolve(raw)
        return cls(data, build_solver(data))

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def with_overrides(self, seed: Optional[int] = None, **sections) -> "RunConfig":
        data = self.to_dict()
        if seed is not None:
            data["noise"]["seed"] = seed
        for section, values in sections.items():
            data[section].update(values)
        return RunConfig.from_dict(data)

    def ensemble(self, threads: int = 1) -> EnsembleConfig:
        ens = self.data["ensemble"]
        return EnsembleConfig(
            base=self.solver,
            n_realizations=ens["n_realizations"],
            quantiles=tuple(ens["quantiles"]),
            reference=ens["reference"],
            threads=threads,
            batch_size=ens["batch_size"],
        )

    def start_positions(self) -> list:
        ch = self.data["characteristics"]
        if ch["starts"] is not None:
            return list(ch["starts"])
        if ch["linspace"] is not None:
            a, b, n = ch["linspace"]
            return [float(x) for x in np.linspace(a, b, n)]
        grid = self.solver.grid
        return [float(x) for x in np.linspace(grid.x_min, grid.x_max, 22)[1:-1]]

    def sweep_configs(self) -> list:
        """``(value, RunConfig)`` for every sweep value, or an empty list."""
        sweep = self.data["sweep"]
        if sweep is None:
            return []
        out = []
        for value in sweep["values"]:
            data = self.to_dict()
            data["sweep"] = None
            if sweep["param"] == "tau":
                data["noise"]["tau"] = value
            else:
                data["kernel"]["eta"] = value
            out.append((value, RunConfig.from_dict(data)))
        return out


def build_solver(data: dict) -> SolverConfig:
    g, k, v, nz, sim = data["grid"], data["kernel"], data["velocity"], data["noise"], data["sim"]
    grid = GridSpec(g["x_min"], g["x_max"], g["dx"])
    kernel = KernelSpec(k["eta"], k["family"])
    if v["family"] == "custom":
        raise ConfigError("velocity.family: custom laws are only available from Python")
    base = VelocityModel(v["family"], v["v_max"], v["rho_max"])
    sv = StochasticVelocity(base, nz["tau"])
    noise = NoiseConfig(nz["tau"], nz["delta_r"], nz["seed"], 0)
    return SolverConfig(
        grid=grid,
        kernel=kernel,
        velocity=sv,
        initial=build_initial(data["initial"]),
        horizon=sim["T"],
        noise=noise,
        cfl_safety=sim["cfl_safety"],
        mode=sim["mode"],
        output_times=tuple(sim["output_times"]),
    )


def load_json(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config: file {str(path)!r} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON in {str(path)!r} ({exc.msg} at line {exc.lineno})") from None
    # a run manifest carries its resolved config under "config"
    if isinstance(raw, dict) and "tool_version" in raw and "config" in raw:
        raw = raw["config"]
    return raw


def parse_config(path) -> RunConfig:
    return RunConfig.from_dict(load_json(path))


def preset_path(name: str) -> Path:
    if name not in PRESETS:
        raise ConfigError(f"preset: unknown preset {name!r}; choose from {PRESETS}")
    return Path(str(resources.files("snvtraffic") / "presets" / f"{name}.json"))


def load_preset(name: str) -> RunConfig:
    return parse_config(preset_path(name))
