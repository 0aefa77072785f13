"""Gluing trajectories together and converting an energy defect into entropy."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import FluidState, InvariantError, Trajectory, mean_energy, total_entropy, validate
from .thermo import GasParams, entropy_of


@dataclass(frozen=True)
class LiftEvent:
    tau: float
    delta: float | str = "all"
    base: int = 0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("lift instant must be positive")
        if self.delta != "all" and not float(self.delta) >= 0:
            raise ValueError("delta must be non-negative or 'all'")


@dataclass(frozen=True)
class LiftResult:
    state: FluidState
    delta: float
    lam: float
    entropy_gain: float


def entropy_lift(s: FluidState, E0: float, gp: GasParams, delta=None, rtol: float = 1e-12,
                 details: bool = False):
    """Raise the temperature uniformly by (1 + lam) so the energy budget is met.

    ``delta`` defaults to the full defect E0 - mean_energy(s).  Defects below
    ``rtol * E0`` in magnitude are treated as zero and return ``s`` itself.
    """
    full = E0 - mean_energy(s, gp)
    tol = rtol * max(1.0, abs(E0))
    if full < -tol:
        raise InvariantError(f"state exceeds the energy budget by {-full:.3e}")
    delta = full if delta is None or delta == "all" else float(delta)
    if delta > full + tol:
        raise ValueError(f"requested delta {delta:.6g} exceeds the available defect {full:.6g}")
    if abs(delta) <= tol:
        out = LiftResult(s, 0.0, 0.0, 0.0)
        return out if details else s
    theta = s.temperature(gp)
    internal = gp.cv * s.grid.dx * float(np.sum(s.rho * theta))
    lam = delta / internal
    S_new = entropy_of(gp, s.rho, (1.0 + lam) * theta)
    lifted = s.replace(S=S_new)
    res = LiftResult(lifted, delta, lam, total_entropy(lifted) - total_entropy(s))
    return res if details else lifted


def check_lift(before: FluidState, res: LiftResult, E0: float, gp: GasParams, energy_rtol=1e-12, entropy_tol=1e-10):
    """Verify the budget equality, the lower bound on lam and the entropy gain bound.

    Returns a dict of booleans; for a full lift the energy condition is
    equality with E0.
    """
    M = before.grid.dx * float(np.sum(before.rho))
    target = mean_energy(before, gp) + res.delta
    return {
        "energy_budget": abs(mean_energy(res.state, gp) - target) <= energy_rtol * abs(target),
        "lambda_bound": res.lam >= res.delta / E0,
        "entropy_gain": res.entropy_gain >= gp.cv * math.log1p(res.delta / E0) * M - entropy_tol,
    }


def concatenate(a: Trajectory, T1: float, b: Trajectory, tol: float = 1e-10) -> Trajectory:
    """``a`` on [0, T1] followed by ``b`` shifted to start at T1.

    The sample at T1 becomes b's initial state, i.e. the right limit.
    """
    k = a.index_of(T1)
    if b.grid != a.grid:
        raise ValueError("trajectories live on different grids")
    if len(b) > 1 and len(a) > 1 and abs(b.out_dt - a.out_dt) > 1e-12:
        raise ValueError("trajectories use different sample spacings")
    sa, sb = a.states[k], b.states[0]
    for name in ("rho", "m"):
        diff = np.abs(getattr(sb, name) - getattr(sa, name))
        bad = np.flatnonzero(diff > tol * np.maximum(1.0, np.abs(getattr(sa, name))))
        if bad.size:
            raise InvariantError(f"incompatible {name} at T1 in cell {int(bad[0])}")
    bad = np.flatnonzero(sb.S < sa.S - tol * np.maximum(1.0, np.abs(sa.S)))
    if bad.size:
        raise InvariantError(f"continuation entropy below S(T1-) in cell {int(bad[0])}")
    times = np.concatenate([a.times[:k], T1 + b.times])
    states = a.states[:k] + b.states
    meta = dict(a.meta)
    meta["lifts"] = list(a.meta.get("lifts", [])) + list(b.meta.get("lifts", []))
    meta["concatenated_at"] = list(a.meta.get("concatenated_at", [])) + [float(T1)]
    return Trajectory(times, states, a.E0, a.M0, meta, a.s_floor)


def lift_and_continue(traj: Trajectory, ev: LiftEvent, cfg, gp: GasParams) -> Trajectory:
    """Lift the state at ``ev.tau`` and continue it with the solver up to the original horizon."""
    from .solver import evolve

    k = traj.index_of(ev.tau)
    before = traj.states[k]
    delta = None if ev.delta == "all" else ev.delta
    res = entropy_lift(before, traj.E0, gp, delta=delta, details=True)
    checks = check_lift(before, res, traj.E0, gp)
    if not all(checks.values()):
        raise InvariantError(f"lift postconditions failed: {checks}")
    times, states, n_steps = evolve(res.state, cfg, gp, n_out=len(traj) - 1 - k)
    tail = Trajectory(times, states, traj.E0, traj.M0, {"lifts": []}, traj.s_floor)
    out = concatenate(traj, traj.times[k], tail)
    out.meta["lifts"].append({
        "tau": float(traj.times[k]),
        "delta": res.delta,
        "lambda": res.lam,
        "entropy_before": total_entropy(before),
        "entropy_after": total_entropy(res.state),
    })
    out.meta["n_steps"] = traj.meta.get("n_steps", 0)
    validate(out, gp, raise_on_fail=True)
    return out
