"""Two-step and one-step selection over a finite candidate family."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .field import FluidState, Trajectory, defect_series
from .functionals import F_D, F_E, F_S, QuadratureSpec, weighted_distance
from .thermo import GasParams

log = logging.getLogger(__name__)

METHODS = ("two_step", "one_step")
SCHEMA_VERSION = 1


@dataclass
class CandidateValues:
    F_S: float
    F_E: float
    F_D: float
    tail_S: float
    tail_E: float
    tail_D: float


@dataclass
class SelectionReport:
    method: str
    values: list
    tie_set: list
    selected: int
    labels: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.tie_set:
            raise ValueError("empty tie set")
        if self.method == "two_step" and self.selected not in self.tie_set:
            raise ValueError("two-step selection must come from the tie set")

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "method": self.method,
            "selected": self.selected,
            "tie_set": list(self.tie_set),
            "labels": list(self.labels),
            "values": [asdict(v) for v in self.values],
            "diagnostics": self.diagnostics,
        }


def evaluate(cs, qs: QuadratureSpec, gp: GasParams) -> list:
    out = []
    for tr in cs:
        fs, fe, fd = F_S(tr, qs), F_E(tr, qs, gp), F_D(tr, qs, gp)
        out.append(CandidateValues(fs.value, fe.value, fd.value, fs.tail_bound, fe.tail_bound, fd.tail_bound))
    return out


def _tieset_from_values(fs, eps_tie):
    fs = np.asarray(fs, dtype=float)
    top = fs.max()
    return [int(i) for i in np.flatnonzero(fs >= top - eps_tie * (1.0 + abs(top)))]


def _argmin_lowest(vals, idx, what):
    vals = np.asarray([vals[i] for i in idx])
    best = vals.min()
    winners = [i for i, v in zip(idx, vals) if v == best]
    if len(winners) > 1:
        log.warning("exact %s tie between candidates %s; taking the lowest index", what, winners)
    return winners[0]


def step1_tieset(cs, qs: QuadratureSpec, eps_tie: float = 1e-8, values=None) -> list:
    """Indices whose discounted total entropy is within eps_tie (relative) of the maximum."""
    if len(cs) == 0:
        raise ValueError("empty candidate set")
    fs = [v.F_S for v in values] if values is not None else [F_S(tr, qs).value for tr in cs]
    return _tieset_from_values(fs, eps_tie)


def step2_argmin(cs, tie, qs: QuadratureSpec, gp: GasParams, values=None) -> int:
    """Index of minimal discounted mean energy within ``tie``."""
    if not tie:
        raise ValueError("empty tie set")
    fe = {i: (values[i].F_E if values is not None else F_E(cs[i], qs, gp).value) for i in tie}
    return _argmin_lowest(fe, list(tie), "F_E")


def select(cs, method: str = "two_step", qs: QuadratureSpec | None = None, gp: GasParams | None = None,
           eps_tie: float = 1e-8) -> SelectionReport:
    qs = qs or QuadratureSpec()
    gp = gp or GasParams()
    if len(cs) == 0:
        raise ValueError("empty candidate set")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    values = evaluate(cs, qs, gp)
    labels = list(getattr(cs, "labels", [str(i) for i in range(len(cs))]))
    if method == "two_step":
        tie = step1_tieset(cs, qs, eps_tie, values)
        chosen = step2_argmin(cs, tie, qs, gp, values)
    else:
        fd = [v.F_D for v in values]
        tie = list(range(len(cs)))
        chosen = _argmin_lowest(fd, tie, "F_D")
    diag = {
        "eps_tie": eps_tie,
        "t_max": qs.t_max,
        "rule": qs.rule,
        "max_defect": [float(defect_series(tr, gp).max()) for tr in cs],
    }
    return SelectionReport(method, values, tie, chosen, labels, diag)


def diperna_leq(a: Trajectory, b: Trajectory, tol: float = 1e-10) -> bool:
    """True when a's total entropy never exceeds b's at any sample instant."""
    if a.times.shape != b.times.shape or np.max(np.abs(a.times - b.times)) > 1e-12:
        raise ValueError("trajectories must share sample times")
    return bool(np.all(a.entropy_series() <= b.entropy_series() + tol))


def _same_entropy(a, b, tol):
    return bool(np.all(np.abs(a.entropy_series() - b.entropy_series()) <= tol))


def is_diperna_maximal(i: int, cs, tol: float = 1e-10) -> bool:
    a = cs[i]
    return all(_same_entropy(a, b, tol) for b in cs if diperna_leq(a, b, tol))


def is_absolute_maximiser(i: int, cs, tol: float = 1e-10) -> bool:
    return all(diperna_leq(b, cs[i], tol) for b in cs)


def moreau_yosida_values(cs, tie, eps: float, q: float, qs: QuadratureSpec, gp: GasParams,
                         values=None, dist=None) -> dict:
    """Regularised energy min_j [dist_q(i, j)**q / eps + F_E(j)] for i in ``tie``."""
    tie = list(tie)
    fe = {j: (values[j].F_E if values is not None else F_E(cs[j], qs, gp).value) for j in tie}
    if dist is None:
        dist = pairwise_distances(cs, tie, qs, q)
    return {i: min(dist[i, j] ** q / eps + fe[j] for j in tie) for i in tie}


def pairwise_distances(cs, idx, qs: QuadratureSpec, q: float) -> dict:
    d = {}
    for a in idx:
        for b in idx:
            if b < a:
                d[a, b] = d[b, a]
            elif a == b:
                d[a, b] = 0.0
            else:
                d[a, b] = weighted_distance(cs[a], cs[b], qs, q)
    return d


def moreau_yosida_argmin(cs, tie, eps: float, q: float, qs: QuadratureSpec, gp: GasParams,
                         values=None, dist=None) -> int:
    """Minimiser of the Moreau-Yosida regularised energy over ``tie``.

    Near-equal regularised values (relative 1e-12) are resolved by the
    unregularised energy, then by index.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    q_max = 2 * gp.gamma / (gp.gamma + 1)
    if not 1.0 < q <= q_max + 1e-15:
        raise ValueError(f"q must lie in (1, {q_max:.6g}]")
    tie = list(tie)
    fe = {j: (values[j].F_E if values is not None else F_E(cs[j], qs, gp).value) for j in tie}
    reg = moreau_yosida_values(cs, tie, eps, q, qs, gp, values, dist)
    best = min(reg.values())
    near = [i for i in tie if reg[i] <= best + 1e-12 * max(1.0, abs(best))]
    return min(near, key=lambda i: (fe[i], i))


def convex_combination(trajs, weights) -> Trajectory:
    """Cell-wise convex combination of (rho, m, S) for trajectories sharing data and times."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ValueError("weights must be a probability vector")
    ref = trajs[0]
    arr = sum(wi * tr.stacked() for wi, tr in zip(w, trajs))
    states = [FluidState(ref.grid, a[0], a[1], a[2]) for a in arr]
    meta = {"convex_combination": [float(x) for x in w], "lifts": []}
    return Trajectory(ref.times.copy(), states, ref.E0, ref.M0, meta, ref.s_floor)


def close_convex_hull(cs, k: int, rng: np.random.Generator, max_denominator: int = 8):
    """Append ``k`` random convex combinations with rational weights n_i / N."""
    if k <= 0 or len(cs) < 2:
        return cs
    trajs, labels = [], []
    for _ in range(k):
        size = int(rng.integers(2, min(3, len(cs)) + 1))
        idx = sorted(rng.choice(len(cs), size=size, replace=False).tolist())
        nums = rng.integers(1, max_denominator + 1, size=size)
        w = nums / nums.sum()
        trajs.append(convex_combination([cs[i] for i in idx], w))
        labels.append("hull(" + ",".join(f"{i}:{n}/{nums.sum()}" for i, n in zip(idx, nums)) + ")")
    return cs.extended(trajs, labels)
