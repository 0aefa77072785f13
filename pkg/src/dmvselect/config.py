"""Experiment configuration: YAML file -> typed settings and initial data."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .concat import LiftEvent
from .field import DataSpec, FluidState, Grid1D, in_data_space
from .functionals import QuadratureSpec
from .solver import SolverConfig
from .thermo import GasParams

PRESETS = ("constant", "sod", "double_rarefaction", "acoustic_pulse", "file")

DEFAULTS = {
    "gas": {"gamma": 1.4},
    "grid": {"n_cells": 100, "x_min": 0.0, "x_max": 1.0},
    "initial": {"preset": "sod"},
    "energy": {"delta": 0.0},
    "s_floor": None,
    "solver": {"t_end": 20.0, "out_dt": 0.01, "cfl": 0.5, "variations": [{"flux": "rusanov", "art_visc": 0.0}]},
    "lifts": [],
    "quadrature": {"t_max": 10.0, "rule": "trapezoid"},
    "selection": {"methods": ["two_step", "one_step"], "eps_tie": 1e-8, "q": None,
                  "my_eps": [1.0, 0.1, 0.01, 0.001], "close_convex_hull": 0},
    "semigroup": {"tau": 1.0, "tol": 1e-8},
    "verify": {"res_coeff": 5.0, "entropy_tol": 1e-8, "t_window": 1.0},
    "jobs": 1,
    "seed": 0,
    "output": "runs/out",
}


class ConfigError(ValueError):
    pass


def _merge(base, over):
    out = dict(base)
    for k, v in (over or {}).items():
        if k not in base:
            raise ConfigError(f"unknown config key {k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict):
            inner = dict(base[k])
            inner.update(v)
            out[k] = inner
        else:
            out[k] = v
    return out


@dataclass
class ExperimentConfig:
    gas: GasParams
    grid: Grid1D
    initial: dict
    energy: dict
    s_floor: float | None
    variations: list
    lifts: list
    quadrature: QuadratureSpec
    methods: list
    eps_tie: float
    q: float
    my_eps: list
    close_convex_hull: int
    semigroup: dict
    verify: dict
    jobs: int
    seed: int
    output: Path
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def t_end(self) -> float:
        return self.variations[0].t_end

    def data_spec(self) -> DataSpec:
        s = initial_state(self.initial, self.grid, self.gas, self.base_dir)
        if "E0" in self.energy and self.energy["E0"] is not None:
            spec = DataSpec.from_state(s, self.gas, E0=float(self.energy["E0"]), s_floor=self.s_floor)
        else:
            spec = DataSpec.from_state(s, self.gas, delta_E=float(self.energy.get("delta", 0.0)), s_floor=self.s_floor)
        return spec

    def check(self) -> DataSpec:
        spec = self.data_spec()
        rep = in_data_space(spec, self.gas)
        if not rep:
            raise ConfigError("initial data not in the data space: " + "; ".join(rep.violations))
        return spec


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    raw = yaml.safe_load(path.read_text()) or {}
    return build_config(raw, overrides, base_dir=path.parent)


def build_config(raw: dict, overrides: dict | None = None, base_dir=None) -> ExperimentConfig:
    c = _merge(DEFAULTS, raw)
    if overrides:
        c = _merge(c, overrides)
    gas = GasParams(float(c["gas"]["gamma"]))
    g = c["grid"]
    grid = Grid1D(int(g["n_cells"]), float(g["x_min"]), float(g["x_max"]))
    sv = c["solver"]
    common = {k: float(sv[k]) for k in ("t_end", "out_dt", "cfl")}
    variations = []
    if "matrix" in sv:
        mx = sv["matrix"]
        for flux, eps in itertools.product(mx.get("flux", ["rusanov"]), mx.get("art_visc", [0.0])):
            variations.append(SolverConfig(flux=flux, art_visc=float(eps), **common))
    else:
        for v in sv.get("variations") or [{}]:
            args = dict(common)
            args.update({k: (float(x) if k != "flux" else x) for k, x in v.items()})
            variations.append(SolverConfig(**args))
    lifts = [LiftEvent(float(e["tau"]), e.get("delta", "all"), int(e.get("base", 0))) for e in c["lifts"] or []]
    for ev in lifts:
        if ev.base >= len(variations):
            raise ConfigError(f"lift base index {ev.base} out of range")
    qd = c["quadrature"]
    sel = c["selection"]
    q = sel.get("q")
    if q is None:
        q = 2 * gas.gamma / (gas.gamma + 1)
    methods = sel.get("methods") or ["two_step"]
    if isinstance(methods, str):
        methods = [methods]
    return ExperimentConfig(
        gas=gas, grid=grid, initial=dict(c["initial"]), energy=dict(c["energy"]),
        s_floor=None if c["s_floor"] is None else float(c["s_floor"]),
        variations=variations, lifts=lifts,
        quadrature=QuadratureSpec(float(qd["t_max"]), qd.get("rule", "trapezoid")),
        methods=list(methods), eps_tie=float(sel["eps_tie"]), q=float(q),
        my_eps=[float(e) for e in sel.get("my_eps", [])],
        close_convex_hull=int(sel.get("close_convex_hull") or 0),
        semigroup=dict(c["semigroup"]), verify=dict(c["verify"]),
        jobs=int(c["jobs"]), seed=int(c["seed"]), output=Path(c["output"]),
        base_dir=Path(base_dir) if base_dir is not None else Path.cwd(),
    )


def initial_state(init: dict, grid: Grid1D, gp: GasParams, base_dir=Path(".")) -> FluidState:
    preset = init.get("preset", "sod")
    x = grid.centers
    xi = (x - grid.x_min) / grid.length
    if preset == "constant":
        return FluidState.from_primitive(grid, init.get("rho", 1.0), init.get("u", 0.0), init.get("p", 1.0), gp)
    if preset == "sod":
        left = init.get("left", [1.0, 0.0, 1.0])
        right = init.get("right", [0.125, 0.0, 0.1])
        mask = xi < init.get("interface", 0.5)
        prim = [np.where(mask, a, b) for a, b in zip(left, right)]
        return FluidState.from_primitive(grid, *prim, gp)
    if preset == "double_rarefaction":
        rho, p, u = init.get("rho", 1.0), init.get("p", 0.4), init.get("u", 1.0)
        vel = np.where(xi < 0.5, -u, u)
        return FluidState.from_primitive(grid, rho, vel, p, gp)
    if preset == "acoustic_pulse":
        amp, xc, w = init.get("amplitude", 1e-2), init.get("center", 0.5), init.get("width", 0.08)
        rho = 1.0 + amp * np.exp(-(((xi - xc) / w) ** 2))
        return FluidState.from_primitive(grid, rho, 0.0, rho**gp.gamma, gp)
    if preset == "file":
        path = Path(init["path"])
        if not path.is_absolute():
            path = Path(base_dir) / path
        data = np.genfromtxt(path, delimiter=",", names=True)
        cols = data.dtype.names
        if data.size != grid.n_cells:
            raise ConfigError(f"{path} has {data.size} rows, grid has {grid.n_cells} cells")
        if {"rho", "m", "S"} <= set(cols):
            return FluidState(grid, data["rho"], data["m"], data["S"])
        if {"rho", "u", "p"} <= set(cols):
            return FluidState.from_primitive(grid, data["rho"], data["u"], data["p"], gp)
        raise ConfigError("initial-data CSV needs columns rho,m,S or rho,u,p")
    raise ConfigError(f"unknown preset {preset!r}; choose from {PRESETS}")
