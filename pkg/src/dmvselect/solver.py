"""First-order finite-volume scheme for the 1D Euler system in a closed box.

Conservative variables (rho, m, E) are advanced with forward Euler, a
two-point numerical flux and optional artificial viscosity; the entropy
density is derived from (rho, theta) at output.  Walls are reflective
ghost cells so that mass and total energy are conserved exactly.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .field import RHO_FLOOR, DataSpec, FluidState, InvariantError, Trajectory, in_data_space, validate
from .thermo import GasParams, entropy_of

log = logging.getLogger(__name__)

FLUXES = ("rusanov", "lax_friedrichs", "hll")


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    flux: str = "rusanov"
    cfl: float = 0.5
    art_visc: float = 0.0
    t_end: float = 1.0
    out_dt: float = 0.01

    def __post_init__(self):
        if self.flux not in FLUXES:
            raise ValueError(f"unknown flux {self.flux!r}; choose from {FLUXES}")
        if not 0.0 < self.cfl <= 0.95:
            raise ValueError("cfl must lie in (0, 0.95]")
        if self.art_visc < 0:
            raise ValueError("artificial viscosity must be non-negative")
        if not (self.out_dt > 0 and self.t_end >= self.out_dt):
            raise ValueError("need 0 < out_dt <= t_end")

    @property
    def n_out(self) -> int:
        return int(round(self.t_end / self.out_dt))

    @property
    def label(self) -> str:
        return f"{self.flux}/eps={self.art_visc:g}"


@dataclass
class CandidateSet:
    """Trajectories sharing one initial datum, energy budget and time grid."""

    spec: DataSpec
    trajectories: list
    labels: list
    failures: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.trajectories) != len(self.labels):
            raise ValueError("one label per trajectory")
        if self.trajectories:
            t0 = self.trajectories[0].times
            for tr in self.trajectories[1:]:
                if tr.times.shape != t0.shape or np.max(np.abs(tr.times - t0)) > 1e-12:
                    raise ValueError("candidates must share the sample times")
                if tr.grid != self.trajectories[0].grid:
                    raise ValueError("candidates must share the grid")

    def __len__(self):
        return len(self.trajectories)

    def __getitem__(self, i):
        return self.trajectories[i]

    def subset(self, order) -> "CandidateSet":
        return CandidateSet(self.spec, [self.trajectories[i] for i in order], [self.labels[i] for i in order],
                            list(self.failures))

    def extended(self, trajs, labels) -> "CandidateSet":
        return CandidateSet(self.spec, self.trajectories + list(trajs), self.labels + list(labels),
                            list(self.failures))


# -- conservative helpers ------------------------------------------------------

def to_conservative(s: FluidState, gp: GasParams) -> np.ndarray:
    return np.stack([s.rho, s.m, s.energy(gp)])


def from_conservative(U: np.ndarray, grid, gp: GasParams) -> FluidState:
    rho, m, E = U
    _check_admissible(U)
    theta = (E - 0.5 * m * m / rho) / (gp.cv * rho)
    return FluidState(grid, rho, m, entropy_of(gp, rho, theta))


def _check_admissible(U):
    rho, m, E = U
    if not np.isfinite(U).all():
        i = int(np.flatnonzero(~np.isfinite(U).all(axis=0))[0])
        raise SolverError(f"NaN/inf detected in cell {i}")
    bad = np.flatnonzero(rho < RHO_FLOOR)
    if bad.size:
        raise SolverError(f"density below positivity floor in cell {int(bad[0])}")
    bad = np.flatnonzero(E - 0.5 * m * m / rho <= 0)
    if bad.size:
        raise SolverError(f"non-positive internal energy in cell {int(bad[0])}")


def _primitive(U, gp):
    rho, m, E = U
    u = m / rho
    p = (gp.gamma - 1.0) * (E - 0.5 * m * u)
    return rho, u, p


def _physical_flux(U, u, p):
    rho, m, E = U
    return np.stack([m, m * u + p, (E + p) * u])


def _with_ghosts(U):
    left = U[:, :1].copy()
    right = U[:, -1:].copy()
    left[1] *= -1.0
    right[1] *= -1.0
    return np.concatenate([left, U, right], axis=1)


def _face_fluxes(U, gp, flux, lf_speed=None):
    Ug = _with_ghosts(U)
    rho, u, p = _primitive(Ug, gp)
    c = np.sqrt(gp.gamma * p / rho)
    F = _physical_flux(Ug, u, p)
    UL, UR = Ug[:, :-1], Ug[:, 1:]
    FL, FR = F[:, :-1], F[:, 1:]
    if flux == "rusanov":
        a = np.maximum(np.abs(u[:-1]) + c[:-1], np.abs(u[1:]) + c[1:])
        return 0.5 * (FL + FR) - 0.5 * a * (UR - UL)
    if flux == "lax_friedrichs":
        return 0.5 * (FL + FR) - 0.5 * lf_speed * (UR - UL)
    sl = np.minimum(u[:-1] - c[:-1], u[1:] - c[1:])
    sr = np.maximum(u[:-1] + c[:-1], u[1:] + c[1:])
    sl = np.minimum(sl, 0.0)
    sr = np.maximum(sr, 0.0)
    return (sr * FL - sl * FR + sl * sr * (UR - UL)) / (sr - sl)


def max_wave_speed(U, gp) -> float:
    rho, u, p = _primitive(U, gp)
    return float(np.max(np.abs(u) + np.sqrt(gp.gamma * p / rho)))


def stable_dt(U, dx, cfg: SolverConfig, gp) -> float:
    smax = max_wave_speed(U, gp)
    return cfg.cfl / (smax / dx + 2.0 * cfg.art_visc / dx**2)


def _advance(U, dx, dt, cfg: SolverConfig, gp):
    lf_speed = max_wave_speed(U, gp) / cfg.cfl if cfg.flux == "lax_friedrichs" else None
    F = _face_fluxes(U, gp, cfg.flux, lf_speed)
    if cfg.art_visc > 0:
        Ug = _with_ghosts(U)
        F = F - cfg.art_visc * np.diff(Ug, axis=1) / dx
    Unew = U - dt / dx * np.diff(F, axis=1)
    _check_admissible(Unew)
    return Unew


def step(s: FluidState, cfg: SolverConfig, gp: GasParams, dt_max: float | None = None):
    """One forward-Euler update; returns ``(new_state, dt_taken)``."""
    U = to_conservative(s, gp)
    dt = stable_dt(U, s.grid.dx, cfg, gp)
    if dt_max is not None:
        dt = min(dt, dt_max)
    return from_conservative(_advance(U, s.grid.dx, dt, cfg, gp), s.grid, gp), dt


def evolve(s: FluidState, cfg: SolverConfig, gp: GasParams, n_out: int | None = None):
    """Sample the solution at k*out_dt, k = 0..n_out, starting from ``s``.

    Each macro interval is integrated on its own local clock so a restart
    from any sample reproduces the remaining samples.
    """
    n_out = cfg.n_out if n_out is None else n_out
    U = to_conservative(s, gp)
    dx = s.grid.dx
    states = [s]
    n_steps = 0
    for k in range(n_out):
        t_local = 0.0
        while True:
            remaining = cfg.out_dt - t_local
            dt = stable_dt(U, dx, cfg, gp)
            last = dt >= remaining
            if last:
                dt = remaining
            try:
                U = _advance(U, dx, dt, cfg, gp)
            except SolverError as exc:
                raise SolverError(f"{exc} during macro interval {k} (t={k * cfg.out_dt:.6g})") from None
            n_steps += 1
            if last:
                break
            t_local += dt
        states.append(from_conservative(U, s.grid, gp))
    times = cfg.out_dt * np.arange(n_out + 1)
    return times, states, n_steps


def run(spec: DataSpec, cfg: SolverConfig, gp: GasParams, check: bool = True) -> Trajectory:
    rep = in_data_space(spec, gp)
    if not rep:
        raise InvariantError("initial data outside the data space: " + "; ".join(rep.violations))
    times, states, n_steps = evolve(spec.initial_state(), cfg, gp)
    meta = {"flux": cfg.flux, "art_visc": cfg.art_visc, "cfl": cfg.cfl, "n_steps": n_steps, "lifts": []}
    traj = Trajectory(times, states, spec.E0, spec.M0, meta, spec.s_floor)
    if check:
        validate(traj, gp, raise_on_fail=True)
    return traj


def _run_job(args):
    spec, cfg, gp = args
    return run(spec, cfg, gp)


def make_candidates(spec: DataSpec, variations, lifts=(), gp: GasParams | None = None, jobs: int = 1) -> CandidateSet:
    """Run every configuration and append lifted copies of base runs.

    Failed runs and failed lifts are listed in ``failures`` and excluded.
    """
    from .concat import lift_and_continue

    gp = gp or GasParams()
    variations = list(variations)
    if not variations:
        raise ValueError("need at least one solver configuration")
    grid_t = {(v.t_end, v.out_dt) for v in variations}
    if len(grid_t) != 1:
        raise ValueError("all variations must share t_end and out_dt")

    if jobs > 1 and len(variations) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futures = [ex.submit(_run_job, (spec, v, gp)) for v in variations]
            outcomes = []
            for f in futures:
                try:
                    outcomes.append(f.result())
                except (SolverError, InvariantError) as exc:
                    outcomes.append(exc)
    else:
        outcomes = []
        for v in variations:
            try:
                outcomes.append(run(spec, v, gp))
            except (SolverError, InvariantError) as exc:
                outcomes.append(exc)

    trajs, labels, failures, base = [], [], [], {}
    for i, (v, out) in enumerate(zip(variations, outcomes)):
        if isinstance(out, Exception):
            failures.append({"label": v.label, "error": str(out)})
            log.warning("candidate %s failed: %s", v.label, out)
            continue
        base[i] = len(trajs)
        trajs.append(out)
        labels.append(v.label)

    for ev in lifts:
        b = getattr(ev, "base", 0)
        label = f"{variations[b].label}+lift(tau={ev.tau:g})" if b < len(variations) else f"lift(tau={ev.tau:g})"
        if b not in base:
            failures.append({"label": label, "error": f"base run {b} unavailable"})
            continue
        try:
            trajs.append(lift_and_continue(trajs[base[b]], ev, variations[b], gp))
            labels.append(label)
        except (SolverError, InvariantError, ValueError) as exc:
            failures.append({"label": label, "error": str(exc)})
            log.warning("lifted candidate %s failed: %s", label, exc)
    return CandidateSet(spec, trajs, labels, failures)


def with_horizon(cfg: SolverConfig, t_end: float) -> SolverConfig:
    return replace(cfg, t_end=t_end)
