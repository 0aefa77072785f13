"""Polytropic gas state functions in the variables (rho, m, S).

S is the entropy per unit volume, S = rho * s with specific entropy
s = cv*log(theta) - log(rho).  The internal energy density is
rho*e = cv*rho*theta and the pressure is p = rho**gamma * exp(S/(cv*rho)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class _OutOfDomain:
    """Marker for the ``+infinity`` branch of the vacuum conventions."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "OUT_OF_DOMAIN"

    def __bool__(self):
        return False


OUT_OF_DOMAIN = _OutOfDomain()


@dataclass(frozen=True)
class GasParams:
    gamma: float = 1.4

    def __post_init__(self):
        if not (self.gamma > 1.0) or not math.isfinite(self.gamma):
            raise ValueError(f"gamma must be > 1, got {self.gamma}")

    @property
    def cv(self) -> float:
        return 1.0 / (self.gamma - 1.0)


@dataclass(frozen=True)
class StatePoint:
    rho: float
    m: np.ndarray = field(default_factory=lambda: np.zeros(1))
    S: float = 0.0

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.m, dtype=float))
        if m.ndim != 1 or m.size not in (1, 2, 3):
            raise ValueError("momentum must have 1, 2 or 3 components")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "S", float(self.S))
        if math.isnan(self.rho) or math.isnan(self.S) or np.isnan(m).any():
            raise ValueError("NaN in state")
        if self.rho < 0:
            raise ValueError(f"negative density {self.rho}")

    @property
    def dim(self) -> int:
        return self.m.size

    def as_vector(self) -> np.ndarray:
        """Stacked coordinates ``(rho, m_1..m_d, S)``."""
        return np.concatenate(([self.rho], self.m, [self.S]))

    @classmethod
    def from_vector(cls, v) -> "StatePoint":
        v = np.asarray(v, dtype=float)
        return cls(v[0], v[1:-1], v[-1])


@dataclass(frozen=True)
class Equilibrium:
    rho_bar: float
    theta_bar: float
    cv: float

    def __post_init__(self):
        if not (self.rho_bar > 0 and self.theta_bar > 0):
            raise ValueError("equilibrium density and temperature must be positive")

    @property
    def s_bar(self) -> float:
        return self.cv * math.log(self.theta_bar) - math.log(self.rho_bar)

    def state(self, dim: int = 1) -> StatePoint:
        return StatePoint(self.rho_bar, np.zeros(dim), self.rho_bar * self.s_bar)


def _check_nan(*xs):
    for x in xs:
        if np.isnan(x).any():
            raise ValueError("NaN input")


def pressure(gp: GasParams, rho, S):
    """Pressure p(rho, S), or OUT_OF_DOMAIN for vacuum with positive entropy."""
    _check_nan(rho, S)
    rho, S = float(rho), float(S)
    if rho < 0:
        raise ValueError(f"negative density {rho}")
    if rho > 0:
        return rho**gp.gamma * math.exp(S / (gp.cv * rho))
    return 0.0 if S <= 0 else OUT_OF_DOMAIN


def temperature(gp: GasParams, rho, S):
    """theta = rho**(gamma-1) * exp(S/(cv*rho)); works on arrays."""
    rho = np.asarray(rho, dtype=float)
    S = np.asarray(S, dtype=float)
    _check_nan(rho, S)
    if np.any(rho <= 0):
        raise ValueError("temperature requires rho > 0")
    theta = np.exp((gp.gamma - 1.0) * np.log(rho) + S / (gp.cv * rho))
    return theta if theta.ndim else float(theta)


def entropy_of(gp: GasParams, rho, theta):
    """Entropy density S = rho*(cv*log(theta) - log(rho)); works on arrays."""
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    _check_nan(rho, theta)
    if np.any(rho <= 0) or np.any(theta <= 0):
        raise ValueError("entropy_of requires rho > 0 and theta > 0")
    S = rho * (gp.cv * np.log(theta) - np.log(rho))
    return S if S.ndim else float(S)


def specific_entropy(gp: GasParams, rho, theta):
    return gp.cv * np.log(theta) - np.log(rho)


def energy_density(gp: GasParams, rho, m, S):
    """Vectorised total energy on the domain rho > 0.

    ``m`` may be shaped like ``rho`` (d = 1) or carry a trailing axis of
    momentum components.
    """
    rho = np.asarray(rho, dtype=float)
    m = np.asarray(m, dtype=float)
    m2 = m * m if m.shape == rho.shape else np.sum(m * m, axis=-1)
    return 0.5 * m2 / rho + gp.cv * rho * temperature(gp, rho, S)


def total_energy(gp: GasParams, p: StatePoint):
    """E(rho, m, S) with the vacuum convention; OUT_OF_DOMAIN stands for +inf."""
    if p.rho > 0:
        return float(0.5 * p.m @ p.m / p.rho + gp.cv * p.rho * temperature(gp, p.rho, p.S))
    if np.all(p.m == 0) and p.S <= 0:
        return 0.0
    return OUT_OF_DOMAIN


def energy_gradient(gp: GasParams, p: StatePoint) -> np.ndarray:
    """Gradient of E w.r.t. ``(rho, m, S)`` at a point with rho > 0."""
    if p.rho <= 0:
        raise ValueError("gradient defined only for rho > 0")
    theta = temperature(gp, p.rho, p.S)
    u = p.m / p.rho
    s = p.S / p.rho
    d_rho = -0.5 * u @ u + gp.gamma * gp.cv * theta - s * theta
    return np.concatenate(([d_rho], u, [theta]))


def bregman_energy(gp: GasParams, p: StatePoint, eq: Equilibrium) -> float:
    """Relative energy of ``p`` with respect to the equilibrium (rho_bar, 0, theta_bar)."""
    E = total_energy(gp, p)
    if E is OUT_OF_DOMAIN:
        raise ValueError(f"state {p} outside the energy domain")
    tb, rb, sb = eq.theta_bar, eq.rho_bar, eq.s_bar
    p_bar = (gp.gamma - 1.0) * gp.cv * rb * tb
    chem = gp.cv * tb - tb * sb + p_bar / rb
    return E - chem * (p.rho - rb) - tb * (p.S - rb * sb) - rb * gp.cv * tb


def check_convexity(gp: GasParams, a: StatePoint, b: StatePoint, tol: float = 1e-12) -> bool:
    """Midpoint convexity test E((a+b)/2) <= (E(a)+E(b))/2 + tol."""
    mid = StatePoint.from_vector(0.5 * (a.as_vector() + b.as_vector()))
    Ea, Eb, Em = total_energy(gp, a), total_energy(gp, b), total_energy(gp, mid)
    if Ea is OUT_OF_DOMAIN or Eb is OUT_OF_DOMAIN:
        return True
    if Em is OUT_OF_DOMAIN:
        return False
    return Em <= 0.5 * (Ea + Eb) + tol * max(1.0, abs(Ea), abs(Eb))


def convexity_gap(gp: GasParams, a: StatePoint, b: StatePoint) -> float:
    mid = StatePoint.from_vector(0.5 * (a.as_vector() + b.as_vector()))
    return 0.5 * (total_energy(gp, a) + total_energy(gp, b)) - total_energy(gp, mid)


def r_coeff(d: int, gp: GasParams) -> float:
    """Weight of the concentration trace in the energy compatibility bound."""
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    return min(0.5, d * gp.gamma / (gp.gamma - 1.0))


def sound_speed(gp: GasParams, rho, p):
    return np.sqrt(gp.gamma * p / rho)
