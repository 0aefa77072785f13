"""Weak-form residuals of the continuity, momentum and entropy relations.

Test functions are separable, phi(t, x) = g(t) h(x).  Sampled data are
taken piecewise constant in space and piecewise linear in time between
samples, and every integral is evaluated exactly for such data (up to a
high-order Gauss rule applied to the smooth test functions).  Constant
states therefore give residuals at round-off level.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .field import Trajectory, YoungState, dmv_mean_energy, mean_energy, Grid1D
from .thermo import GasParams, energy_density, temperature

_GL_T = np.polynomial.legendre.leggauss(8)
_GL_X = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True)
class TestFunction:
    """Separable test function g(t) h(x) with derivatives."""

    name: str
    kind: str
    g: object
    dg: object
    h: object
    dh: object
    support: tuple
    vector: bool = False
    nonnegative: bool = False

    __test__ = False

    def __call__(self, t, x):
        return self.g(t) * self.h(x)

    def check_boundary(self, grid: Grid1D, tol: float = 1e-13):
        if self.vector and (abs(self.h(grid.x_min)) > tol or abs(self.h(grid.x_max)) > tol):
            raise ValueError(f"test function {self.name} violates phi.n = 0 on the boundary")


def _bernstein(k, n=3):
    from math import comb

    c = comb(n, k)
    h = lambda z: c * z**k * (1 - z) ** (n - k)

    def dh(z):
        a = k * z ** (k - 1) * (1 - z) ** (n - k) if k else 0.0 * z
        b = (n - k) * z**k * (1 - z) ** (n - k - 1) if n - k else 0.0 * z
        return c * (a - b)

    return h, dh


def _bump(z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - z[inside] ** 2))
    return out


def _dbump(z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1
    zi = z[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - zi**2)) * (-2.0 * zi / (1.0 - zi**2) ** 2)
    return out


def polynomial(a: int, b: int, t_end: float, grid: Grid1D, vector: bool = False) -> TestFunction:
    """(1 - t/T)^2 (t/T)^a times the degree-3 Bernstein polynomial B_b in x.

    The vector variant is multiplied by xi(1 - xi) so it vanishes at the walls.
    """
    T, L, x0 = t_end, grid.length, grid.x_min
    g = lambda t: (1 - t / T) ** 2 * (t / T) ** a
    dg = lambda t: (-2 * (1 - t / T) * (t / T) ** a + (1 - t / T) ** 2 * (a * (t / T) ** (a - 1) if a else 0.0)) / T
    Bh, Bdh = _bernstein(b)
    if vector:
        h = lambda x: Bh((x - x0) / L) * ((x - x0) / L) * (1 - (x - x0) / L)
        dh = lambda x: (Bdh((x - x0) / L) * ((x - x0) / L) * (1 - (x - x0) / L)
                        + Bh((x - x0) / L) * (1 - 2 * (x - x0) / L)) / L
    else:
        h = lambda x: Bh((x - x0) / L)
        dh = lambda x: Bdh((x - x0) / L) / L
    name = f"{'v' if vector else 's'}poly_t{a}_x{b}"
    return TestFunction(name, "space_time_polynomial", g, dg, h, dh, (0.0, T, grid.x_min, grid.x_max), vector, True)


def bump(tc: float, rt: float, xc: float, rx: float, vector: bool = False) -> TestFunction:
    g = lambda t: _bump((t - tc) / rt)
    dg = lambda t: _dbump((t - tc) / rt) / rt
    h = lambda x: _bump((x - xc) / rx)
    dh = lambda x: _dbump((x - xc) / rx) / rx
    name = f"{'v' if vector else 's'}bump_t{tc:g}_x{xc:g}"
    return TestFunction(name, "compact_bump", g, dg, h, dh, (tc - rt, tc + rt, xc - rx, xc + rx), vector, True)


def default_basis(t_end: float, grid: Grid1D, vector: bool = False) -> list:
    """16 windowed polynomials and 8 interior bumps, all non-negative in the scalar case."""
    basis = [polynomial(a, b, t_end, grid, vector) for a in range(4) for b in range(4)]
    L = grid.length
    for tc in (0.0, 0.5 * t_end):
        for xc in (0.2, 0.4, 0.6, 0.8):
            basis.append(bump(tc, 0.45 * t_end, grid.x_min + xc * L, 0.18 * L, vector))
    return basis


def _time_weights(times, g, dg):
    """Weights w, w' with sum_k f_k w_k = int f g dt and sum_k f_k w'_k = int f g' dt.

    Exact for f linear between samples; the g' weights come from
    integration by parts so that constant data telescope to round-off.
    """
    nodes, wts = _GL_T
    t0, t1 = times[:-1], times[1:]
    h = (t1 - t0)[:, None]
    s = 0.5 * (nodes[None, :] + 1.0)
    vals = g(t0[:, None] + h * s) * 0.5 * wts[None, :] * h
    left = np.sum(vals * (1 - s), axis=1)
    right = np.sum(vals * s, axis=1)
    w = np.zeros(len(times))
    w[:-1] += left
    w[1:] += right
    mean = np.sum(vals, axis=1) / h[:, 0]
    gt = g(np.asarray(times, dtype=float))
    wd = np.zeros(len(times))
    wd[:-1] += mean - gt[:-1]
    wd[1:] += gt[1:] - mean
    return w, wd


def _space_weights(grid: Grid1D, h):
    nodes, wts = _GL_X
    xf = grid.faces
    xq = xf[:-1, None] + grid.dx * 0.5 * (nodes[None, :] + 1.0)
    H = np.sum(h(xq) * 0.5 * wts[None, :], axis=1) * grid.dx
    hf = h(xf)
    return H, np.diff(hf)


def weak_form(times, density, flux, init, phi: TestFunction, grid: Grid1D) -> float:
    """int int [density d_t phi + flux d_x phi] + int init phi(0, .)

    ``density`` and ``flux`` have shape (n_times, n_cells).
    """
    w, wd = _time_weights(np.asarray(times, dtype=float), phi.g, phi.dg)
    H, D = _space_weights(grid, phi.h)
    g0 = float(phi.g(np.array(0.0)))
    return float(wd @ density @ H + w @ flux @ D + g0 * init @ H)


def _fields(traj: Trajectory):
    arr = traj.stacked()
    return arr[:, 0], arr[:, 1], arr[:, 2]


def continuity_residual(traj: Trajectory, phi: TestFunction) -> float:
    rho, m, _ = _fields(traj)
    return weak_form(traj.times, rho, m, rho[0], phi, traj.grid)


@dataclass
class MomentumResult:
    residual: float
    conc_bound: float
    tol: float

    @property
    def passed(self) -> bool:
        return abs(self.residual) <= self.conc_bound + self.tol


@dataclass
class YoungTrajectory:
    """Young states sampled at uniform instants, with the energy budget."""

    times: np.ndarray
    states: list
    E0: float
    initial: object = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.initial is None:
            self.initial = self.states[0]

    @property
    def grid(self):
        return self.states[0].grid


def _momentum_flux_traj(traj: Trajectory, gp: GasParams):
    rho, m, S = _fields(traj)
    p = (gp.gamma - 1.0) * gp.cv * rho * temperature(gp, rho, S)
    return m, m * m / rho + p


def _momentum_flux_young(ys: YoungState, gp: GasParams):
    w = ys.weights
    pos = ys.rho > 0
    flux = np.zeros_like(ys.rho)
    r, S = ys.rho[pos], ys.S[pos]
    mm = ys.m[..., 0][pos]
    flux[pos] = mm * mm / r + (gp.gamma - 1.0) * gp.cv * r * temperature(gp, r, S)
    return np.sum(w * ys.m[..., 0], axis=1), np.sum(w * flux, axis=1)


def momentum_residual(data, phi: TestFunction, gp: GasParams, conc_trace=None, tol: float = 1e-10) -> MomentumResult:
    """Momentum residual with the bound max|d_x phi| * int int trace C.

    ``data`` is a Trajectory (atomic, ``conc_trace`` optional array
    (n_times, n_cells)) or a YoungTrajectory (trace taken from its states).
    """
    if not phi.vector:
        raise ValueError("momentum residual needs a vector test function")
    phi.check_boundary(data.grid)
    grid = data.grid
    if isinstance(data, YoungTrajectory):
        pairs = [_momentum_flux_young(ys, gp) for ys in data.states]
        mean_m = np.array([p[0] for p in pairs])
        flux = np.array([p[1] for p in pairs])
        trace = np.array([ys.conc_trace for ys in data.states])
        m0 = _momentum_flux_young(data.initial, gp)[0]
    else:
        mean_m, flux = _momentum_flux_traj(data, gp)
        trace = np.zeros_like(mean_m) if conc_trace is None else np.asarray(conc_trace, dtype=float)
        m0 = mean_m[0]
    res = weak_form(data.times, mean_m, flux, m0, phi, grid)
    w, _ = _time_weights(data.times, lambda t: np.ones_like(t), lambda t: np.zeros_like(t))
    xs = np.linspace(grid.x_min, grid.x_max, 20 * grid.n_cells + 1)
    ts = np.linspace(data.times[0], data.times[-1], 20 * len(data.times) + 1)
    grad_max = float(np.max(np.abs(phi.g(ts)))) * float(np.max(np.abs(phi.dh(xs))))
    bound = grad_max * grid.dx * float(w @ trace.sum(axis=1))
    return MomentumResult(res, bound, tol)


def entropy_residual(traj: Trajectory, phi: TestFunction) -> float:
    """Entropy weak-form value; the inequality requires it to be <= 0."""
    if not phi.nonnegative:
        raise ValueError("entropy test functions must be non-negative")
    rho, m, S = _fields(traj)
    return weak_form(traj.times, S, S * m / rho, S[0], phi, traj.grid)


@dataclass
class EnergyCompat:
    passed: bool
    data_ok: bool
    per_instant: np.ndarray
    margins: np.ndarray
    below_initial: np.ndarray

    def first_failure(self):
        bad = np.flatnonzero(~self.per_instant)
        return int(bad[0]) if bad.size else None


def energy_compat_check(data, E0: float, gp: GasParams, d: int = 1, tol: float = 1e-10) -> EnergyCompat:
    """Per-instant check of the energy budget, including the concentration term.

    ``below_initial`` reports the stronger comparison with the initial mean
    energy; it is informational only since lifts legitimately raise the
    mean energy up to E0.
    """
    if isinstance(data, YoungTrajectory):
        energies = np.array([dmv_mean_energy(ys, gp, d) for ys in data.states])
        initial = dmv_mean_energy(data.initial, gp, d)
    else:
        energies = data.energy_series(gp)
        initial = mean_energy(data.states[0], gp)
    scale = tol * max(1.0, abs(E0))
    data_ok = E0 >= initial - scale
    margins = E0 - energies
    per_instant = margins >= -scale
    below_initial = energies <= initial + scale
    return EnergyCompat(bool(data_ok and per_instant.all()), bool(data_ok), per_instant, margins, below_initial)


@dataclass
class ResidualReport:
    continuity: dict
    momentum: dict
    entropy: dict
    energy: EnergyCompat
    entropy_tol: float

    @property
    def entropy_ok(self) -> bool:
        return all(v <= self.entropy_tol for v in self.entropy.values())

    @property
    def momentum_ok(self) -> bool:
        return all(r.passed for r in self.momentum.values())

    def norms(self) -> dict:
        return {
            "continuity": max(abs(v) for v in self.continuity.values()),
            "momentum": max(abs(r.residual) for r in self.momentum.values()),
            "entropy_max": max(self.entropy.values()),
        }

    def rows(self, candidate: str = "0"):
        for name, v in self.continuity.items():
            yield (candidate, "continuity", name, "", v, "")
        for name, r in self.momentum.items():
            yield (candidate, "momentum", name, "", r.residual, "PASS" if r.passed else "FAIL")
        for name, v in self.entropy.items():
            yield (candidate, "entropy", name, "", v, "PASS" if v <= self.entropy_tol else "FAIL")
        for k, (ok, margin) in enumerate(zip(self.energy.per_instant, self.energy.margins)):
            yield (candidate, "energy", "", k, float(margin), "PASS" if ok else "FAIL")


def verify(traj: Trajectory, gp: GasParams, basis=None, vbasis=None, mom_tol: float | None = None,
           entropy_tol: float = 1e-8, t_window: float | None = None) -> ResidualReport:
    """Evaluate all four conditions over the default test basis.

    With ``t_window`` the weak-form tests are supported in [0, t_window];
    energy compatibility is still checked at every sample.
    """
    full = traj
    if t_window is not None and t_window < float(traj.times[-1]):
        k = int(np.searchsorted(traj.times, t_window + 1e-12 * max(1.0, t_window), side="right")) - 1
        if k < 1:
            raise ValueError("verification window shorter than one sample interval")
        traj = traj.truncated(k)
    t_end = float(traj.times[-1])
    basis = default_basis(t_end, traj.grid) if basis is None else basis
    vbasis = default_basis(t_end, traj.grid, vector=True) if vbasis is None else vbasis
    if mom_tol is None:
        mom_tol = 1e-10
    cont = {phi.name: continuity_residual(traj, phi) for phi in basis}
    mom = {phi.name: momentum_residual(traj, phi, gp, tol=mom_tol) for phi in vbasis}
    ent = {phi.name: entropy_residual(traj, phi) for phi in basis if phi.nonnegative}
    energy = energy_compat_check(full, full.E0, gp)
    return ResidualReport(cont, mom, ent, energy, entropy_tol)


def _pad_atoms(a, n_atoms, weight=False):
    extra = n_atoms - a.shape[1]
    if extra == 0:
        return a
    fill = np.zeros_like(a[:, :1]) if weight else a[:, :1]
    return np.concatenate([a] + [fill] * extra, axis=1)


def save_young(yt: YoungTrajectory, path) -> None:
    """Store a YoungTrajectory as a compressed ``.npz`` archive.

    States with fewer atoms are padded with zero-weight copies of their first atom.
    """
    g = yt.grid
    k = max(y.weights.shape[1] for y in yt.states)
    np.savez_compressed(
        path, times=yt.times, E0=yt.E0, grid=np.array([g.n_cells, g.x_min, g.x_max]),
        weights=np.stack([_pad_atoms(y.weights, k, True) for y in yt.states]),
        rho=np.stack([_pad_atoms(y.rho, k) for y in yt.states]),
        m=np.stack([_pad_atoms(y.m, k) for y in yt.states]), S=np.stack([_pad_atoms(y.S, k) for y in yt.states]),
        conc_trace=np.stack([y.conc_trace for y in yt.states]),
    )


def load_young(path) -> YoungTrajectory:
    z = np.load(path)
    n, x0, x1 = z["grid"]
    grid = Grid1D(int(n), float(x0), float(x1))
    states = [YoungState(grid, z["weights"][k], z["rho"][k], z["m"][k], z["S"][k], z["conc_trace"][k])
              for k in range(len(z["times"]))]
    return YoungTrajectory(z["times"], states, float(z["E0"]))
