import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dmvselect.field import (
    DataSpec, FluidState, Grid1D, InvariantError, Trajectory, YoungState, defect, defect_series,
    dmv_mean_energy, in_data_space, jensen_gap, load_trajectory, mean_energy, save_trajectory,
    total_entropy, total_mass, validate, young_barycenter,
)
from dmvselect.thermo import GasParams, entropy_of

from conftest import constant_state, constant_trajectory, sod_state


def test_grid_geometry():
    g = Grid1D(4, 0.0, 2.0)
    assert g.dx == 0.5
    assert np.allclose(g.centers, [0.25, 0.75, 1.25, 1.75])
    assert len(g.faces) == 5
    with pytest.raises(ValueError):
        Grid1D(0)
    with pytest.raises(ValueError):
        Grid1D(4, 1.0, 0.0)


def test_total_mass(gp):
    g = Grid1D(100)
    assert total_mass(constant_state(g, gp)) == pytest.approx(1.0, rel=1e-14)
    assert total_mass(constant_state(g, gp, rho=2.0)) == pytest.approx(2.0, rel=1e-14)
    assert total_mass(sod_state(g, gp)) == pytest.approx(0.5625, rel=1e-14)


def test_total_entropy(gp):
    g = Grid1D(64)
    s = constant_state(g, gp)
    assert total_entropy(s) == 0.0
    s = constant_state(g, gp, theta=math.exp(1.0 / gp.cv))
    assert total_entropy(s) == pytest.approx(1.0, rel=1e-14)


def test_mean_energy(gp):
    g = Grid1D(100)
    assert mean_energy(constant_state(g, gp), gp) == pytest.approx(gp.cv, rel=1e-14)
    # p / (gamma - 1) averaged over the two halves
    oracle = 0.5 * 1.0 / 0.4 + 0.5 * 0.1 / 0.4
    assert mean_energy(sod_state(g, gp), gp) == pytest.approx(oracle, rel=1e-13)


def test_fluid_state_checks(gp):
    g = Grid1D(4)
    with pytest.raises(InvariantError, match="cell 1"):
        FluidState(g, [1.0, 0.0, 1.0, 1.0], [0] * 4, [0] * 4)
    with pytest.raises(ValueError):
        FluidState(g, [1.0, 1.0], [0, 0], [0, 0])
    s = constant_state(g, gp)
    with pytest.raises(ValueError):
        s.rho[0] = 3.0


def test_defect(gp):
    g = Grid1D(20)
    s = constant_state(g, gp)
    tr = constant_trajectory(s, gp, n_t=5)
    assert defect(0, tr, gp) == 0.0
    tr = constant_trajectory(s, gp, n_t=5, E0=mean_energy(s, gp) + 0.3)
    assert np.allclose([defect(k, tr, gp) for k in range(5)], 0.3, rtol=1e-13)
    assert np.allclose(defect_series(tr, gp), 0.3, rtol=1e-13)


def test_defect_clamps_and_raises(gp):
    s = constant_state(Grid1D(10), gp)
    E = mean_energy(s, gp)
    tr = constant_trajectory(s, gp, n_t=3, E0=E - 1e-13)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assert defect(1, tr, gp) == 0.0
    assert w
    tr = constant_trajectory(s, gp, n_t=3, E0=E - 1e-3)
    with pytest.raises(InvariantError, match="instant 0"):
        defect(0, tr, gp)


def test_validate_reports_first_failure(gp):
    g = Grid1D(10)
    a = constant_state(g, gp)
    b = constant_state(g, gp, theta=0.9)
    tr = Trajectory(np.arange(3.0), [a, a, b], mean_energy(a, gp), 1.0)
    rep = validate(tr, gp)
    assert not rep
    assert rep.first()[0] == "entropy" and rep.first()[1] == 2
    with pytest.raises(InvariantError, match="instant 2"):
        validate(tr, gp, raise_on_fail=True)
    assert validate(constant_trajectory(a, gp, n_t=4), gp)


def test_trajectory_rejects_bad_times(gp):
    s = constant_state(Grid1D(4), gp)
    with pytest.raises(ValueError):
        Trajectory([0.0, 0.0], [s, s], 1.0, 1.0)
    with pytest.raises(ValueError):
        Trajectory([0.1, 0.2], [s, s], 1.0, 1.0)


def _two_atom(g):
    n = g.n_cells
    w = np.full((n, 2), 0.5)
    rho = np.ones((n, 2))
    m = np.stack([np.ones(n), -np.ones(n)], axis=1)
    return YoungState(g, w, rho, m, np.zeros((n, 2)), 0.0)


def test_young_barycenter_and_gap(gp):
    g = Grid1D(5)
    y = _two_atom(g)
    b = young_barycenter(y)
    assert np.allclose(b.rho, 1.0) and np.allclose(b.m, 0.0) and np.allclose(b.S, 0.0)
    assert np.allclose(jensen_gap(y, gp), 0.5, rtol=1e-14)
    s = constant_state(g, gp, u=0.3, theta=1.7)
    y1 = YoungState.from_state(s)
    b1 = young_barycenter(y1)
    assert np.array_equal(b1.rho, s.rho) and np.array_equal(b1.m, s.m) and np.array_equal(b1.S, s.S)
    assert np.allclose(jensen_gap(y1, gp), 0.0, atol=1e-14)
    assert dmv_mean_energy(y1, gp) == pytest.approx(mean_energy(s, gp), rel=1e-14)


def test_dmv_mean_energy_concentration(gp):
    g = Grid1D(10)
    s = constant_state(g, gp)
    y = YoungState.from_state(s, conc_trace=0.2)
    assert dmv_mean_energy(y, gp, d=1) == pytest.approx(mean_energy(s, gp) + 0.5 * 0.2, rel=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_young_random_atoms(n_atoms, d, seed):
    gp = GasParams()
    rng = np.random.default_rng(seed)
    g = Grid1D(6)
    w = rng.random((6, n_atoms)) + 0.01
    w /= w.sum(axis=1, keepdims=True)
    rho = rng.uniform(0.2, 3.0, (6, n_atoms))
    m = rng.normal(size=(6, n_atoms, d))
    theta = rng.uniform(0.2, 3.0, (6, n_atoms))
    S = entropy_of(gp, rho, theta)
    c = rng.uniform(0, 1, 6)
    y = YoungState(g, w, rho, m, S, c)
    b = young_barycenter(y)
    # brute-force weighted sums
    for i in range(6):
        assert b.rho[i] == pytest.approx(sum(w[i, a] * rho[i, a] for a in range(n_atoms)), rel=1e-13)
        assert b.S[i] == pytest.approx(sum(w[i, a] * S[i, a] for a in range(n_atoms)), rel=1e-12, abs=1e-13)
    assert np.all(jensen_gap(y, gp) >= -1e-12)
    E = sum(w[:, a] * (0.5 * np.sum(m[:, a] ** 2, axis=1) / rho[:, a] + gp.cv * rho[:, a] * theta[:, a])
            for a in range(n_atoms))
    assert dmv_mean_energy(y, gp) == pytest.approx(g.dx * float(np.sum(E + 0.5 * c)), rel=1e-12)


def test_young_validation():
    g = Grid1D(4)
    w = np.full((4, 2), 0.5)
    w[0] = 0.7
    with pytest.raises(InvariantError):
        YoungState(g, w, np.ones((4, 2)), np.zeros((4, 2)), np.zeros((4, 2)), 0.0)
    with pytest.raises(InvariantError):
        YoungState(g, np.ones((4, 1)), np.ones((4, 1)), np.zeros((4, 1)), np.zeros((4, 1)), -1.0)


def test_in_data_space(gp):
    g = Grid1D(20)
    s = constant_state(g, gp)
    spec = DataSpec.from_state(s, gp)
    assert in_data_space(spec, gp)
    low = DataSpec.from_state(s, gp, E0=0.9 * mean_energy(s, gp))
    rep = in_data_space(low, gp)
    assert not rep and "energy" in rep.violations[0]
    S = s.S.copy()
    S[7] -= 0.5
    dipped = DataSpec(g, s.rho, s.m, S, mean_energy(s, gp), s_floor=0.0)
    rep = in_data_space(dipped, gp)
    assert not rep and "cell 7" in rep.violations[0]


def test_persistence_round_trip(tmp_path, gp):
    g = Grid1D(13, -0.5, 1.25)
    rng = np.random.default_rng(3)
    states = [FluidState(g, rng.uniform(0.5, 2, 13), rng.normal(size=13), rng.normal(size=13)) for _ in range(4)]
    tr = Trajectory(0.1 * np.arange(4), states, 7.25, 1.5, {"flux": "hll", "lifts": []}, -0.3)
    save_trajectory(tr, tmp_path / "run", gp)
    back, gp2 = load_trajectory(tmp_path / "run")
    assert gp2 == gp
    assert back.grid == g and back.E0 == tr.E0 and back.M0 == tr.M0 and back.s_floor == tr.s_floor
    assert np.max(np.abs(back.stacked() - tr.stacked())) <= 1e-15
    assert np.max(np.abs(back.times - tr.times)) <= 1e-15
    assert back.meta["flux"] == "hll"
    header = (tmp_path / "run" / "states.csv").read_text().splitlines()[0]
    assert header == "t,cell_index,x_center,rho,m,S"
