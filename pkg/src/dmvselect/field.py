"""Discrete states on a 1D grid, trajectories, atomic Young measures and data checks."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .thermo import GasParams, StatePoint, energy_density, r_coeff, specific_entropy, temperature, total_energy, OUT_OF_DOMAIN

RHO_FLOOR = 1e-10


class InvariantError(ValueError):
    """A state or trajectory violates one of its defining constraints."""


@dataclass(frozen=True)
class Grid1D:
    n_cells: int
    x_min: float = 0.0
    x_max: float = 1.0

    def __post_init__(self):
        if self.n_cells < 4:
            raise ValueError("need at least 4 cells")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def faces(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_cells + 1) * self.dx

    def to_dict(self):
        return {"n_cells": self.n_cells, "x_min": self.x_min, "x_max": self.x_max}


@dataclass(frozen=True)
class FluidState:
    grid: Grid1D
    rho: np.ndarray
    m: np.ndarray
    S: np.ndarray

    def __post_init__(self):
        n = self.grid.n_cells
        for name in ("rho", "m", "S"):
            a = np.array(getattr(self, name), dtype=float)
            if a.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},), got {a.shape}")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if not (np.isfinite(self.rho).all() and np.isfinite(self.m).all() and np.isfinite(self.S).all()):
            raise InvariantError("non-finite values in state")
        bad = np.flatnonzero(self.rho <= 0)
        if bad.size:
            raise InvariantError(f"non-positive density in cell {bad[0]}")

    @classmethod
    def from_primitive(cls, grid, rho, u, p, gp: GasParams) -> "FluidState":
        rho = np.broadcast_to(np.asarray(rho, dtype=float), (grid.n_cells,))
        u = np.broadcast_to(np.asarray(u, dtype=float), (grid.n_cells,))
        p = np.broadcast_to(np.asarray(p, dtype=float), (grid.n_cells,))
        theta = p / ((gp.gamma - 1.0) * gp.cv * rho)
        return cls(grid, rho, rho * u, rho * specific_entropy(gp, rho, theta))

    def cell(self, i: int) -> StatePoint:
        return StatePoint(self.rho[i], [self.m[i]], self.S[i])

    def temperature(self, gp: GasParams) -> np.ndarray:
        return temperature(gp, self.rho, self.S)

    def pressure(self, gp: GasParams) -> np.ndarray:
        return (gp.gamma - 1.0) * gp.cv * self.rho * self.temperature(gp)

    def energy(self, gp: GasParams) -> np.ndarray:
        return energy_density(gp, self.rho, self.m, self.S)

    def replace(self, **kw) -> "FluidState":
        args = {"grid": self.grid, "rho": self.rho, "m": self.m, "S": self.S}
        args.update(kw)
        return FluidState(**args)


def total_mass(s: FluidState) -> float:
    return s.grid.dx * float(np.sum(s.rho))


def total_entropy(s: FluidState) -> float:
    return s.grid.dx * float(np.sum(s.S))


def mean_energy(s: FluidState, gp: GasParams) -> float:
    E = s.energy(gp)
    bad = np.flatnonzero(~np.isfinite(E))
    if bad.size:
        raise InvariantError(f"cell {bad[0]} outside the energy domain")
    return s.grid.dx * float(np.sum(E))


@dataclass
class Trajectory:
    """A candidate dissipative solution sampled at uniform macro instants.

    Samples hold right limits ``U(t_k+)``; at a lift instant the pre-jump
    values are recorded in ``meta["lifts"]``.
    """

    times: np.ndarray
    states: list
    E0: float
    M0: float
    meta: dict = field(default_factory=dict)
    s_floor: float = -math.inf

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) != len(self.states) or len(self.states) == 0:
            raise ValueError("times and states must be non-empty and of equal length")
        if self.times[0] != 0.0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must start at 0 and increase strictly")
        grids = {s.grid for s in self.states}
        if len(grids) != 1:
            raise ValueError("all states must share one grid")

    @property
    def grid(self) -> Grid1D:
        return self.states[0].grid

    @property
    def out_dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def __len__(self):
        return len(self.states)

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > tol * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a sample instant")
        return k

    def entropy_series(self) -> np.ndarray:
        return np.array([total_entropy(s) for s in self.states])

    def energy_series(self, gp: GasParams) -> np.ndarray:
        return np.array([mean_energy(s, gp) for s in self.states])

    def mass_series(self) -> np.ndarray:
        return np.array([total_mass(s) for s in self.states])

    def stacked(self) -> np.ndarray:
        """Array of shape (n_times, 3, n_cells) holding rho, m, S."""
        return np.stack([np.stack([s.rho, s.m, s.S]) for s in self.states])

    def tail(self, k: int) -> "Trajectory":
        """Samples from index ``k`` on, with time measured from t_k."""
        return Trajectory(self.times[k:] - self.times[k], self.states[k:], self.E0, self.M0, dict(self.meta),
                          self.s_floor)

    def truncated(self, k_end: int) -> "Trajectory":
        return Trajectory(self.times[: k_end + 1], self.states[: k_end + 1], self.E0, self.M0, dict(self.meta), self.s_floor)


@dataclass
class ValidationReport:
    ok: bool
    failures: list

    def __bool__(self):
        return self.ok

    def first(self):
        return self.failures[0] if self.failures else None


def validate(traj: Trajectory, gp: GasParams, mass_rtol=1e-10, entropy_tol=1e-10, energy_tol=1e-10,
             raise_on_fail=False) -> ValidationReport:
    """Check mass conservation, the energy budget and entropy monotonicity."""
    failures = []
    mass = traj.mass_series()
    energy = traj.energy_series(gp)
    entropy = traj.entropy_series()
    for k in range(len(traj)):
        if abs(mass[k] - traj.M0) > mass_rtol * abs(traj.M0):
            failures.append(("mass", k, float(traj.times[k]), float(mass[k] - traj.M0)))
        if energy[k] > traj.E0 + energy_tol * max(1.0, abs(traj.E0)):
            failures.append(("energy", k, float(traj.times[k]), float(energy[k] - traj.E0)))
        if k and entropy[k] < entropy[k - 1] - entropy_tol:
            failures.append(("entropy", k, float(traj.times[k]), float(entropy[k] - entropy[k - 1])))
        if math.isfinite(traj.s_floor):
            s = traj.states[k]
            bad = np.flatnonzero(s.S < traj.s_floor * s.rho - 1e-10 * np.maximum(1.0, np.abs(s.S)))
            if bad.size:
                failures.append(("s_floor", k, float(traj.times[k]), int(bad[0])))
    failures.sort(key=lambda f: f[1])
    report = ValidationReport(not failures, failures)
    if raise_on_fail and failures:
        kind, k, t, detail = failures[0]
        raise InvariantError(f"{kind} invariant violated at instant {k} (t={t:.6g}): {detail}")
    return report


def defect(t_index: int, traj: Trajectory, gp: GasParams, tol: float = 1e-10) -> float:
    """Energy defect E0 - mean energy at sample ``t_index`` (clamped at 0 within tol)."""
    d = traj.E0 - mean_energy(traj.states[t_index], gp)
    if d < 0:
        if d < -tol * max(1.0, abs(traj.E0)):
            raise InvariantError(f"mean energy exceeds E0 by {-d:.3e} at instant {t_index}")
        warnings.warn(f"negative defect {d:.3e} clamped to 0 at instant {t_index}", stacklevel=2)
        return 0.0
    return d


def defect_series(traj: Trajectory, gp: GasParams) -> np.ndarray:
    return np.maximum(traj.E0 - traj.energy_series(gp), 0.0)


@dataclass(frozen=True)
class YoungState:
    """Per-cell atomic probability measures plus the aggregated concentration trace.

    ``weights`` has shape (n_cells, n_atoms); ``rho``, ``S`` share it and
    ``m`` carries a trailing axis of d momentum components.
    """

    grid: Grid1D
    weights: np.ndarray
    rho: np.ndarray
    m: np.ndarray
    S: np.ndarray
    conc_trace: np.ndarray
    s_floor: float = -math.inf

    def __post_init__(self):
        n = self.grid.n_cells
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != n:
            raise ValueError("weights must have shape (n_cells, n_atoms)")
        m = np.asarray(self.m, dtype=float)
        if m.ndim == 2:
            m = m[..., None]
        if m.shape[:2] != w.shape or m.shape[2] not in (1, 2, 3):
            raise ValueError("momentum atoms must have shape (n_cells, n_atoms, d)")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "m", m)
        for name in ("rho", "S"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != w.shape:
                raise ValueError(f"{name} atoms must have shape {w.shape}")
            object.__setattr__(self, name, a)
        c = np.broadcast_to(np.asarray(self.conc_trace, dtype=float), (n,)).copy()
        object.__setattr__(self, "conc_trace", c)
        if np.any(w < 0) or np.any(np.abs(w.sum(axis=1) - 1.0) > 1e-12):
            raise InvariantError("atom weights must be non-negative and sum to 1 in each cell")
        if np.any(self.rho < 0):
            raise InvariantError("atom with negative density")
        if np.any(self.S < self.s_floor * self.rho):
            raise InvariantError("atom below the entropy floor")
        if np.any(c < 0):
            raise InvariantError("negative concentration trace")

    @property
    def dim(self) -> int:
        return self.m.shape[2]

    @classmethod
    def from_state(cls, s: FluidState, conc_trace=0.0) -> "YoungState":
        n = s.grid.n_cells
        return cls(s.grid, np.ones((n, 1)), s.rho[:, None], s.m[:, None, None], s.S[:, None], conc_trace)

    def atom_energies(self, gp: GasParams) -> np.ndarray:
        E = np.zeros_like(self.rho)
        pos = self.rho > 0
        m2 = np.sum(self.m**2, axis=-1)
        E[pos] = energy_density(gp, self.rho[pos], np.sqrt(m2[pos]), self.S[pos])
        vac = ~pos
        bad = vac & ((m2 > 0) | (self.S > 0)) & (self.weights > 0)
        if bad.any():
            i = np.argwhere(bad)[0]
            raise InvariantError(f"atom {tuple(i)} outside the energy domain")
        return E


@dataclass(frozen=True)
class Barycenter:
    rho: np.ndarray
    m: np.ndarray
    S: np.ndarray
    degenerate: bool

    def fluid_state(self, grid: Grid1D) -> FluidState:
        if self.m.shape[1] != 1:
            raise ValueError("FluidState carries one momentum component")
        return FluidState(grid, self.rho, self.m[:, 0], self.S)


def young_barycenter(y: YoungState):
    """Per-cell expected values.

    Returns a FluidState for d = 1 with positive densities; otherwise a
    Barycenter record with ``degenerate`` set when some cell has rho == 0.
    """
    w = y.weights
    rho = np.sum(w * y.rho, axis=1)
    m = np.einsum("ca,cad->cd", w, y.m)
    S = np.sum(w * y.S, axis=1)
    degenerate = bool(np.any(rho <= 0))
    if y.dim == 1 and not degenerate:
        return FluidState(y.grid, rho, m[:, 0], S)
    return Barycenter(rho, m, S, degenerate)


def _bary_energy(bary, gp: GasParams) -> np.ndarray:
    if isinstance(bary, FluidState):
        return bary.energy(gp)
    out = np.empty(bary.rho.shape)
    for i in range(out.size):
        e = total_energy(gp, StatePoint(bary.rho[i], bary.m[i], bary.S[i]))
        if e is OUT_OF_DOMAIN:
            raise InvariantError(f"barycenter of cell {i} outside the energy domain")
        out[i] = e
    return out


def jensen_gap(y: YoungState, gp: GasParams) -> np.ndarray:
    """<V; E> - E(<V>) cell-wise; non-negative by convexity of E."""
    mean_of_E = np.sum(y.weights * y.atom_energies(gp), axis=1)
    return mean_of_E - _bary_energy(young_barycenter(y), gp)


def dmv_mean_energy(y: YoungState, gp: GasParams, d: int | None = None) -> float:
    d = y.dim if d is None else d
    mean_of_E = np.sum(y.weights * y.atom_energies(gp), axis=1)
    return y.grid.dx * float(np.sum(mean_of_E + r_coeff(d, gp) * y.conc_trace))


@dataclass
class DataSpec:
    grid: Grid1D
    rho0: np.ndarray
    m0: np.ndarray
    S0: np.ndarray
    E0: float
    s_floor: float | None = None

    def __post_init__(self):
        self.rho0 = np.asarray(self.rho0, dtype=float)
        self.m0 = np.asarray(self.m0, dtype=float)
        self.S0 = np.asarray(self.S0, dtype=float)
        if self.s_floor is None:
            self.s_floor = float(np.min(self.S0 / self.rho0))

    @classmethod
    def from_state(cls, s: FluidState, gp: GasParams, E0=None, delta_E=0.0, s_floor=None) -> "DataSpec":
        E0 = mean_energy(s, gp) + delta_E if E0 is None else E0
        return cls(s.grid, s.rho.copy(), s.m.copy(), s.S.copy(), float(E0), s_floor)

    def initial_state(self) -> FluidState:
        return FluidState(self.grid, self.rho0, self.m0, self.S0)

    @property
    def M0(self) -> float:
        return self.grid.dx * float(np.sum(self.rho0))


@dataclass
class DataSpaceReport:
    ok: bool
    violations: list

    def __bool__(self):
        return self.ok


def in_data_space(spec: DataSpec, gp: GasParams, tol: float = 1e-12) -> DataSpaceReport:
    violations = []
    E_init = spec.grid.dx * float(np.sum(energy_density(gp, spec.rho0, spec.m0, spec.S0)))
    if E_init > spec.E0 + tol * max(1.0, abs(spec.E0)):
        violations.append(f"energy: initial mean energy {E_init:.12g} exceeds E0 = {spec.E0:.12g}")
    bad = np.flatnonzero(spec.S0 < spec.s_floor * spec.rho0)
    for i in bad:
        violations.append(f"entropy floor: S0 < s_floor*rho0 in cell {int(i)}")
    return DataSpaceReport(not violations, violations)


# -- persistence ---------------------------------------------------------------

CSV_HEADER = "t,cell_index,x_center,rho,m,S"


def save_trajectory(traj: Trajectory, path, gp: GasParams) -> Path:
    """Write ``meta.json`` and ``states.csv`` into the directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "gamma": gp.gamma,
        "E0": traj.E0,
        "M0": traj.M0,
        "s_floor": traj.s_floor if math.isfinite(traj.s_floor) else None,
        "grid": traj.grid.to_dict(),
        "times": [float(t) for t in traj.times],
        "provenance": traj.meta,
    }
    (path / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    x = traj.grid.centers
    with open(path / "states.csv", "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for t, s in zip(traj.times, traj.states):
            for i in range(traj.grid.n_cells):
                fh.write(f"{float(t)!r},{i},{float(x[i])!r},{float(s.rho[i])!r},{float(s.m[i])!r},{float(s.S[i])!r}\n")
    return path


def load_trajectory(path):
    """Inverse of :func:`save_trajectory`; returns ``(trajectory, gas)``."""
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text())
    grid = Grid1D(**meta["grid"])
    data = np.loadtxt(path / "states.csv", delimiter=",", skiprows=1, ndmin=2)
    n = grid.n_cells
    times = np.asarray(meta["times"], dtype=float)
    if data.shape[0] != n * len(times):
        raise ValueError("states.csv does not match meta.json")
    states = []
    for k in range(len(times)):
        block = data[k * n:(k + 1) * n]
        states.append(FluidState(grid, block[:, 3], block[:, 4], block[:, 5]))
    s_floor = meta.get("s_floor")
    traj = Trajectory(times, states, meta["E0"], meta["M0"], meta.get("provenance", {}),
                      -math.inf if s_floor is None else s_floor)
    return traj, GasParams(meta["gamma"])
