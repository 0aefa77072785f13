"""Exponentially discounted selection functionals and the equilibrium state."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import DataSpec, Trajectory
from .thermo import Equilibrium, GasParams

RULES = ("trapezoid", "left_riemann")


@dataclass(frozen=True)
class QuadratureSpec:
    t_max: float = 10.0
    rule: str = "trapezoid"

    def __post_init__(self):
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.rule not in RULES:
            raise ValueError(f"unknown rule {self.rule!r}")

    def doubled(self) -> "QuadratureSpec":
        return QuadratureSpec(2 * self.t_max, self.rule)


@dataclass(frozen=True)
class WeightedValue:
    value: float
    tail_bound: float

    def __float__(self):
        return self.value


def weighted_integral(times, series, qs: QuadratureSpec) -> WeightedValue:
    """Integral of exp(-t)*series over [0, t_max] plus the tail bound exp(-t_max)*max|series|."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(series, dtype=float)
    if t.shape != y.shape or t.size < 2:
        raise ValueError("need matching sample times and values (at least two)")
    h = t[1] - t[0]
    if t[0] != 0.0 or np.max(np.abs(np.diff(t) - h)) > 1e-9 * max(h, 1.0):
        raise ValueError("sample times must be uniform and start at 0")
    if t[-1] < qs.t_max - 1e-9 * qs.t_max:
        raise ValueError(f"samples end at {t[-1]:.6g} < t_max = {qs.t_max:.6g}")
    n = int(round(qs.t_max / h))
    t, y = t[: n + 1], y[: n + 1]
    f = np.exp(-t) * y
    if qs.rule == "trapezoid":
        value = h * (0.5 * f[0] + f[1:-1].sum() + 0.5 * f[-1])
    else:
        value = h * f[:-1].sum()
    tail = math.exp(-t[-1]) * float(np.max(np.abs(y)))
    return WeightedValue(float(value), tail)


def F_S(traj: Trajectory, qs: QuadratureSpec) -> WeightedValue:
    return weighted_integral(traj.times, traj.entropy_series(), qs)


def F_E(traj: Trajectory, qs: QuadratureSpec, gp: GasParams) -> WeightedValue:
    return weighted_integral(traj.times, traj.energy_series(gp), qs)


def equilibrium_of(M0: float, E0: float, length: float, gp: GasParams) -> Equilibrium:
    if not (M0 > 0 and E0 > 0):
        raise ValueError("equilibrium needs positive mass and energy")
    return Equilibrium(M0 / length, E0 / (gp.cv * M0), gp.cv)


def equilibrium(spec: DataSpec, gp: GasParams, domain_length: float | None = None) -> Equilibrium:
    length = spec.grid.length if domain_length is None else domain_length
    return equilibrium_of(spec.M0, spec.E0, length, gp)


def F_D(traj: Trajectory, qs: QuadratureSpec, gp: GasParams) -> WeightedValue:
    """F_E - theta_bar * F_S with theta_bar = E0 / (cv M0)."""
    if traj.M0 <= 0:
        raise ValueError("zero total mass")
    theta_bar = traj.E0 / (gp.cv * traj.M0)
    fe, fs = F_E(traj, qs, gp), F_S(traj, qs)
    return WeightedValue(fe.value - theta_bar * fs.value, fe.tail_bound + theta_bar * fs.tail_bound)


def max_equilibrium_entropy(M0: float, E0: float, length: float, gp: GasParams) -> float:
    """Total entropy |Omega| rho_bar s_bar of the constant equilibrium."""
    eq = equilibrium_of(M0, E0, length, gp)
    return length * eq.rho_bar * eq.s_bar


def weighted_distance(a: Trajectory, b: Trajectory, qs: QuadratureSpec, q: float = 2.0) -> float:
    """exp(-t)-weighted discrete L^q distance between two trajectories.

    Space integral is the cell sum over all of (rho, m, S); time integral uses
    the functional quadrature on the shared sample grid.
    """
    if a.times.shape != b.times.shape or np.max(np.abs(a.times - b.times)) > 1e-12:
        raise ValueError("trajectories must share sample times")
    diff = np.abs(a.stacked() - b.stacked()) ** q
    series = a.grid.dx * diff.sum(axis=(1, 2))
    return weighted_integral(a.times, series, qs).value ** (1.0 / q)
