"""Command line entry point: simulate, select, verify, semigroup, plot."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import residuals
from .config import ConfigError, ExperimentConfig, load_config
from .field import DataSpec, InvariantError, defect_series, load_trajectory, save_trajectory, validate
from .functionals import QuadratureSpec, weighted_distance, weighted_integral
from .selection import (close_convex_hull, is_diperna_maximal, moreau_yosida_argmin, pairwise_distances, select,
                        step2_argmin)
from .solver import SolverError, make_candidates, run

log = logging.getLogger("dmvselect")

EXIT_OK, EXIT_FAIL, EXIT_NA = 0, 1, 2
DIAG_HEADER = ["candidate", "t", "total_mass", "total_entropy", "mean_energy", "defect"]


def _fmt(x):
    return repr(float(x))


def write_diagnostics(path: Path, cs_or_trajs, gp, labels=None):
    trajs = list(cs_or_trajs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIAG_HEADER)
        for i, tr in enumerate(trajs):
            mass, ent, en = tr.mass_series(), tr.entropy_series(), tr.energy_series(gp)
            dfc = defect_series(tr, gp)
            for k, t in enumerate(tr.times):
                w.writerow([i, _fmt(t), _fmt(mass[k]), _fmt(ent[k]), _fmt(en[k]), _fmt(dfc[k])])
    if labels is not None:
        (path.parent / "labels.json").write_text(json.dumps(list(labels), indent=2))


def _horizon(cfg: ExperimentConfig, t_needed: float):
    if cfg.t_end + 1e-12 >= t_needed:
        return cfg.variations
    log.info("extending simulation horizon from %g to %g", cfg.t_end, t_needed)
    return [replace(v, t_end=t_needed) for v in cfg.variations]


def _candidates(cfg: ExperimentConfig, spec: DataSpec, t_needed: float):
    variations = _horizon(cfg, t_needed)
    cs = make_candidates(spec, variations, cfg.lifts, cfg.gas, jobs=cfg.jobs)
    if cfg.close_convex_hull and len(cs) > 1:
        cs = close_convex_hull(cs, cfg.close_convex_hull, np.random.default_rng(cfg.seed))
    return cs


# -- simulate ------------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig, out: Path) -> int:
    try:
        spec = cfg.check()
        traj = run(spec, cfg.variations[0], cfg.gas, check=False)
    except (ConfigError, InvariantError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out.mkdir(parents=True, exist_ok=True)
    save_trajectory(traj, out / "trajectory", cfg.gas)
    write_diagnostics(out / "diagnostics.csv", [traj], cfg.gas, [cfg.variations[0].label])
    rep = validate(traj, cfg.gas)
    if not rep:
        kind, k, t, detail = rep.first()
        print(f"FAIL: {kind} invariant violated at instant {k} (t={t:.6g}): {detail}", file=sys.stderr)
        return EXIT_FAIL
    print(f"simulate: {len(traj)} samples, final defect {defect_series(traj, cfg.gas)[-1]:.6g}; invariants PASS")
    return EXIT_OK


# -- select --------------------------------------------------------------------

def selection_bundle(cs, cfg: ExperimentConfig, qs: QuadratureSpec) -> dict:
    """Run every requested method, the doubled-horizon check and the regularised argmin chain."""
    gp = cfg.gas
    out = {"schema": 1, "labels": list(cs.labels), "failures": list(cs.failures), "methods": {}}
    for method in cfg.methods:
        rep = select(cs, method, qs, gp, cfg.eps_tie)
        rep2 = select(cs, method, qs.doubled(), gp, cfg.eps_tie)
        d = rep.to_dict()
        d["horizon_check"] = {
            "t_max_doubled": qs.doubled().t_max,
            "selected_doubled": rep2.selected,
            "status": "stable" if rep2.selected == rep.selected else "changed",
        }
        if method == "two_step":
            d["diperna_maximal"] = [is_diperna_maximal(i, cs) for i in rep.tie_set]
            if cfg.my_eps:
                dist = pairwise_distances(cs, rep.tie_set, qs, cfg.q)
                chain = [moreau_yosida_argmin(cs, rep.tie_set, e, cfg.q, qs, gp, rep.values, dist) for e in cfg.my_eps]
                target = step2_argmin(cs, rep.tie_set, qs, gp, rep.values)
                d["moreau_yosida"] = {"q": cfg.q, "eps": cfg.my_eps, "argmin": chain,
                                      "converged": chain[-1] == target}
        out["methods"][method] = d
    return out


def cmd_select(cfg: ExperimentConfig, out: Path) -> int:
    try:
        spec = cfg.check()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    qs = cfg.quadrature
    cs = _candidates(cfg, spec, 2 * qs.t_max)
    for f in cs.failures:
        print(f"candidate failed: {f['label']}: {f['error']}", file=sys.stderr)
    if len(cs) == 0:
        print("error: every candidate failed", file=sys.stderr)
        return EXIT_FAIL
    bundle = selection_bundle(cs, cfg, qs)
    out.mkdir(parents=True, exist_ok=True)
    (out / "selection_report.json").write_text(json.dumps(bundle, indent=2, sort_keys=True))
    write_diagnostics(out / "diagnostics.csv", cs, cfg.gas, cs.labels)
    print(summary_table(bundle))
    return EXIT_OK


def summary_table(bundle: dict) -> str:
    lines = []
    for method, d in bundle["methods"].items():
        lines.append(f"[{method}] selected {d['selected']} ({bundle['labels'][d['selected']]}), "
                     f"tie set {d['tie_set']}, horizon {d['horizon_check']['status']}")
        lines.append(f"{'idx':>4} {'F_S':>14} {'F_E':>14} {'F_D':>14}  label")
        for i, v in enumerate(d["values"]):
            mark = "*" if i == d["selected"] else " "
            lines.append(f"{i:>3}{mark} {v['F_S']:>14.8g} {v['F_E']:>14.8g} {v['F_D']:>14.8g}  {bundle['labels'][i]}")
    return "\n".join(lines)


# -- verify --------------------------------------------------------------------

def cmd_verify(cfg: ExperimentConfig, out: Path, traj_dirs=(), young=None) -> int:
    gp = cfg.gas
    res_coeff = float(cfg.verify.get("res_coeff", 5.0))
    t_window = cfg.verify.get("t_window", 1.0)
    t_window = None if t_window is None else float(t_window)
    entropy_tol = float(cfg.verify.get("entropy_tol", 1e-8))
    if young is not None:
        yt = residuals.load_young(young)
        ec = residuals.energy_compat_check(yt, yt.E0, gp, d=yt.states[0].dim)
        out.mkdir(parents=True, exist_ok=True)
        (out / "residual_report.json").write_text(json.dumps({"schema": 1, "young": {
            "energy_compat": "PASS" if ec.passed else "FAIL", "first_failure": ec.first_failure()}}, indent=2))
        if not ec.passed:
            k = ec.first_failure()
            print(f"FAIL young: energy_compat at instant {k}", file=sys.stderr)
            return EXIT_FAIL
        print("young: energy_compat PASS")
        return EXIT_OK
    if traj_dirs:
        trajs = [load_trajectory(p)[0] for p in traj_dirs]
        labels = [str(p) for p in traj_dirs]
    else:
        try:
            spec = cfg.check()
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAIL
        cs = make_candidates(spec, cfg.variations, cfg.lifts, gp, jobs=cfg.jobs)
        trajs, labels = list(cs), cs.labels
    out.mkdir(parents=True, exist_ok=True)
    summary, rows, status = {}, [], EXIT_OK
    for i, tr in enumerate(trajs):
        rep = residuals.verify(tr, gp, entropy_tol=entropy_tol, mom_tol=res_coeff * tr.grid.dx,
                                t_window=t_window)
        tol = res_coeff * tr.grid.dx
        norms = rep.norms()
        checks = {
            "continuity": norms["continuity"] <= tol,
            "momentum": rep.momentum_ok,
            "entropy": rep.entropy_ok,
            "energy_compat": rep.energy.passed,
        }
        summary[labels[i]] = {"checks": {k: "PASS" if v else "FAIL" for k, v in checks.items()},
                              "norms": norms, "tolerance": tol, "t_window": t_window,
                              "note": "momentum checked against trace bound of the concentration measure"}
        rows.extend(rep.rows(str(i)))
        for k, ok in checks.items():
            if not ok:
                status = EXIT_FAIL
                where = ""
                if k == "energy_compat":
                    where = f" at instant {rep.energy.first_failure()}"
                print(f"FAIL candidate {i} ({labels[i]}): {k}{where}", file=sys.stderr)
    with open(out / "residuals.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["candidate", "condition", "test_function", "instant", "value", "status"])
        for r in rows:
            w.writerow([r[0], r[1], r[2], r[3], _fmt(r[4]), r[5]])
    (out / "residual_report.json").write_text(json.dumps({"schema": 1, "candidates": summary}, indent=2,
                                                         sort_keys=True))
    for label, s in summary.items():
        print(f"{label}: " + ", ".join(f"{k} {v}" for k, v in s["checks"].items()))
    return status


# -- semigroup -----------------------------------------------------------------

def semigroup_check(cfg: ExperimentConfig, tau: float, method: str = "two_step") -> dict:
    """Select on [0, T], restart the family from the selected state at tau, and compare tails."""
    qs, gp = cfg.quadrature, cfg.gas
    if cfg.lifts or cfg.close_convex_hull:
        return {"status": "not_applicable",
                "message": "family not concatenation-closed; distance not meaningful"}
    spec = cfg.check()
    t_total = max(cfg.t_end, tau + qs.t_max)
    cs = _candidates(cfg, spec, t_total)
    rep = select(cs, method, qs, gp, cfg.eps_tie)
    chosen = cs[rep.selected]
    k = chosen.index_of(tau)
    restart = DataSpec.from_state(chosen.states[k], gp, E0=spec.E0, s_floor=spec.s_floor)
    variations = [replace(v, t_end=chosen.times[-1] - chosen.times[k]) for v in _horizon(cfg, t_total)]
    cs2 = make_candidates(restart, variations, (), gp, jobs=cfg.jobs)
    rep2 = select(cs2, method, qs, gp, cfg.eps_tie)
    dist = weighted_distance(chosen.tail(k), cs2[rep2.selected], qs, 2.0)
    tol = float(cfg.semigroup.get("tol", 1e-8))
    return {"status": "PASS" if dist <= tol else "FAIL", "tau": float(chosen.times[k]), "distance": dist,
            "tol": tol, "selected": rep.selected, "selected_restart": rep2.selected,
            "label": cs.labels[rep.selected], "label_restart": cs2.labels[rep2.selected]}


def cmd_semigroup(cfg: ExperimentConfig, out: Path, tau=None) -> int:
    tau = float(cfg.semigroup.get("tau", 1.0)) if tau is None else tau
    try:
        res = semigroup_check(cfg, tau)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out.mkdir(parents=True, exist_ok=True)
    (out / "semigroup_report.json").write_text(json.dumps({"schema": 1, **res}, indent=2, sort_keys=True))
    if res["status"] == "not_applicable":
        print(res["message"])
        return EXIT_NA
    print(f"semigroup: distance {res['distance']:.3e} (tol {res['tol']:.1e}) -> {res['status']}")
    return EXIT_OK if res["status"] == "PASS" else EXIT_FAIL


# -- plot ----------------------------------------------------------------------

def cmd_plot(run_dir: Path, t_max: float = 10.0) -> int:
    path = Path(run_dir) / "diagnostics.csv"
    if not path.exists():
        print(f"error: {path} not found", file=sys.stderr)
        return EXIT_FAIL
    data = np.genfromtxt(path, delimiter=",", names=True, ndmin=1)
    if data.size == 0:
        print(f"error: {path} is empty", file=sys.stderr)
        return EXIT_FAIL
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels_path = Path(run_dir) / "labels.json"
    cands = np.unique(data["candidate"]).astype(int)
    labels = json.loads(labels_path.read_text()) if labels_path.exists() else [str(c) for c in cands]
    written = []
    for column, fname, ylabel in (("total_entropy", "entropy.png", "total entropy"),
                                  ("mean_energy", "energy.png", "mean energy"),
                                  ("defect", "defect.png", "energy defect")):
        fig, ax = plt.subplots(figsize=(6, 4))
        for c in cands:
            sel = data["candidate"] == c
            ax.plot(data["t"][sel], data[column][sel], label=labels[c] if c < len(labels) else str(c))
        ax.set_xlabel("t")
        ax.set_ylabel(ylabel)
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(Path(run_dir) / fname, metadata={"Software": None})
        plt.close(fig)
        written.append(fname)
    fs, fe = [], []
    for c in cands:
        sel = data["candidate"] == c
        t = data["t"][sel]
        qs = QuadratureSpec(min(t_max, float(t[-1])))
        fs.append(weighted_integral(t, data["total_entropy"][sel], qs).value)
        fe.append(weighted_integral(t, data["mean_energy"][sel], qs).value)
    fig, axes = plt.subplots(1, 2, figsize=(8, 4))
    axes[0].bar(cands, fs)
    axes[0].set_title("F_S")
    axes[1].bar(cands, fe)
    axes[1].set_title("F_E")
    for ax in axes:
        ax.set_xlabel("candidate")
    fig.tight_layout()
    fig.savefig(Path(run_dir) / "functionals.png", metadata={"Software": None})
    plt.close(fig)
    written.append("functionals.png")
    print("wrote " + ", ".join(written))
    return EXIT_OK


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dmvselect", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True):
        sp.add_argument("--config", type=Path, required=needs_config, help="experiment YAML file")
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        sp.add_argument("--jobs", type=int, default=None, help="worker processes for candidate runs")
        sp.add_argument("--seed", type=int, default=None, help="seed for convex-hull sampling")
        sp.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("simulate", help="run one trajectory and write diagnostics"))
    common(sub.add_parser("select", help="run the candidate family and both selection procedures"))
    sp = sub.add_parser("verify", help="weak-form residual checks")
    common(sp, needs_config=False)
    sp.add_argument("--traj", type=Path, action="append", default=[], help="trajectory directory (repeatable)")
    sp.add_argument("--young", type=Path, default=None, help="Young-measure fixture (.npz)")
    sp = sub.add_parser("semigroup", help="restart consistency of the selection")
    common(sp)
    sp.add_argument("--tau", type=float, default=None)
    sp = sub.add_parser("plot", help="static plots from a run directory")
    sp.add_argument("run_dir", type=Path)
    sp.add_argument("--t-max", type=float, default=10.0)
    sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "plot":
        return cmd_plot(args.run_dir, args.t_max)
    overrides = {}
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        if args.config is not None:
            cfg = load_config(args.config, overrides)
        else:
            from .config import build_config
            cfg = build_config({}, overrides)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out = args.out if args.out is not None else cfg.output
    if args.command == "simulate":
        return cmd_simulate(cfg, out)
    if args.command == "select":
        return cmd_select(cfg, out)
    if args.command == "verify":
        return cmd_verify(cfg, out, args.traj, args.young)
    return cmd_semigroup(cfg, out, args.tau)


if __name__ == "__main__":
    sys.exit(main())
