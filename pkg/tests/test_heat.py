"""Implicit time stepping: dissipation, steady states, dt refinement."""

import numpy as np
import pytest

from fraqhom.lattice import (
    Grid,
    ScalarField,
    ValidationError,
    field_from_function,
    identity_coefficient,
    inner,
    interval_mask,
    norm,
    restrict_to_mask,
    scalar_coefficient,
)
from fraqhom.dirichlet import DirichletProblem, solve
from fraqhom.fracops import grad_s
from fraqhom.heat import (
    HeatProblem,
    dt_halving_ratio,
    heat_homog_experiment,
    solve_heat,
    step,
    trajectory_distance,
    write_heat_report_csv,
    write_trajectory_csv,
)
from fraqhom.homog import periodic_sequence_1d, predicted_limit_1d


def _problem(grid512, mask512, forcing, T=0.5, dt=1.0 / 32.0, scale=1.0,
             scheme="implicit-euler"):
    return HeatProblem(
        mask=mask512,
        coeff=identity_coefficient(grid512, scale=scale),
        s=0.5, T=T, dt=dt, forcing=forcing, scheme=scheme)


# -------------------------------------------------------------- validation

def test_problem_validation(grid512, mask512, unit_forcing512):
    with pytest.raises(ValidationError):
        HeatProblem(mask=mask512, coeff=identity_coefficient(grid512),
                    s=0.5, T=-1.0, dt=0.1)
    with pytest.raises(ValidationError):
        HeatProblem(mask=mask512, coeff=identity_coefficient(grid512),
                    s=0.5, T=0.25, dt=1.0)  # rounds to zero steps
    with pytest.raises(ValidationError):
        HeatProblem(mask=mask512, coeff=identity_coefficient(grid512),
                    s=0.5, T=1.0, dt=0.25, scheme="leapfrog")


def test_forcing_must_vanish_outside(grid512, mask512):
    bad = field_from_function(grid512, lambda x: np.ones_like(x))
    prob = HeatProblem(mask=mask512, coeff=identity_coefficient(grid512),
                       s=0.5, T=0.25, dt=0.25,
                       forcing=lambda k: bad)
    with pytest.raises(ValidationError) as err:
        solve_heat(prob)
    assert "step 1" in str(err.value)


def test_steps_counted(grid512, mask512, unit_forcing512):
    prob = _problem(grid512, mask512, unit_forcing512, T=1.0, dt=1.0 / 16.0)
    assert prob.n_steps == 16


# ------------------------------------------------------------ basic physics

def test_zero_forcing_stays_zero(grid512, mask512):
    prob = _problem(grid512, mask512, None, T=0.25, dt=1.0 / 16.0)
    traj = solve_heat(prob)
    assert np.all(np.asarray(traj.norms) == 0.0)
    assert traj.space_time_norm == 0.0


def test_initial_condition_is_zero(grid512, mask512, unit_forcing512):
    traj = solve_heat(_problem(grid512, mask512, unit_forcing512))
    assert traj.times[0] == 0.0
    assert norm(traj.field(0)) == 0.0


def test_solution_vanishes_outside(grid512, mask512, unit_forcing512):
    traj = solve_heat(_problem(grid512, mask512, unit_forcing512))
    last = traj.field(len(traj.times) - 1)
    assert np.all(last.values[mask512.complement()] == 0.0)


def test_norms_increase_toward_steady_state(grid512, mask512,
                                            unit_forcing512):
    traj = solve_heat(_problem(grid512, mask512, unit_forcing512, T=1.0,
                               dt=1.0 / 16.0))
    norms = np.array(traj.norms)
    assert np.all(np.diff(norms) > -1e-12)


def test_long_run_reaches_elliptic_steady_state(grid512, mask512,
                                                unit_forcing512):
    traj = solve_heat(_problem(grid512, mask512, unit_forcing512, T=16.0,
                               dt=0.25))
    stat = solve(DirichletProblem(
        mask=mask512, coeff=identity_coefficient(grid512), s=0.5,
        rhs=unit_forcing512), tol=1e-12)
    last = traj.field(len(traj.times) - 1)
    rel = (np.linalg.norm(last.values - stat.u.values)
           / np.linalg.norm(stat.u.values))
    assert rel < 1e-2


def test_single_huge_step_jumps_to_steady_state(grid512, mask512,
                                                unit_forcing512):
    # (I + dt K) u = dt f for dt >> 1 is K u ~ f up to O(1/dt)
    from fraqhom.lattice import zeros_field
    u1 = step(zeros_field(grid512), unit_forcing512,
              identity_coefficient(grid512), 0.5, 1.0e3, mask512)
    stat = solve(DirichletProblem(
        mask=mask512, coeff=identity_coefficient(grid512), s=0.5,
        rhs=unit_forcing512), tol=1e-12)
    rel = (np.linalg.norm(u1.values - stat.u.values)
           / np.linalg.norm(stat.u.values))
    assert rel < 2e-3


def test_unforced_decay_is_monotone(grid512, mask512, unit_forcing512):
    # start from the steady state, switch the forcing off
    stat = solve(DirichletProblem(
        mask=mask512, coeff=identity_coefficient(grid512), s=0.5,
        rhs=unit_forcing512), tol=1e-12)
    u = stat.u
    prev = norm(u)
    for _ in range(8):
        u = step(u, None, identity_coefficient(grid512), 0.5, 0.125, mask512)
        cur = norm(u)
        assert cur < prev
        prev = cur


def test_discrete_energy_inequality(grid512, mask512, unit_forcing512):
    # || u_{k+1} ||^2 + 2 dt alpha || grad_s u_{k+1} ||^2
    #   <= || u_k ||^2 + 2 dt <f, u_{k+1}> + slack
    dt = 1.0 / 16.0
    from fraqhom.lattice import zeros_field
    a = identity_coefficient(grid512)  # alpha = 1
    u = zeros_field(grid512)
    prev_sq = 0.0
    for _ in range(8):
        u = step(u, unit_forcing512, a, 0.5, dt, mask512, tol=1e-12)
        g = grad_s(u, 0.5)
        gsq = float(np.sum(g.values ** 2)) * grid512.cell_volume
        lhs = norm(u) ** 2 + 2.0 * dt * 1.0 * gsq
        rhs = prev_sq + 2.0 * dt * inner(unit_forcing512, u) + 1e-8
        assert lhs <= rhs
        prev_sq = norm(u) ** 2


def test_stiff_coefficients_remain_stable(grid512, mask512, unit_forcing512):
    # contrast beta/alpha = 100 across three dt decades
    vals = np.where(grid512.axis() > 0.0, 10.0, 0.1)
    a = scalar_coefficient(grid512, vals, alpha=0.1, beta=10.0)
    for dt in (1.0, 0.1, 0.01):
        prob = HeatProblem(mask=mask512, coeff=a, s=0.5, T=10 * dt, dt=dt,
                           forcing=unit_forcing512)
        traj = solve_heat(prob, tol=1e-9)
        assert np.all(np.isfinite(traj.norms))
        assert max(traj.norms) < 10.0


# ------------------------------------------------------------- refinement

def test_richardson_ratio_implicit_euler(grid512, mask512, unit_forcing512):
    prob = _problem(grid512, mask512, unit_forcing512, T=0.5, dt=1.0 / 8.0)
    d1, d2, ratio = dt_halving_ratio(prob, tol=1e-11)
    assert d1 > d2 > 0
    assert 1.6 < ratio < 2.4


def test_richardson_ratio_crank_nicolson(grid512, mask512, unit_forcing512):
    prob = _problem(grid512, mask512, unit_forcing512, T=0.5, dt=1.0 / 8.0,
                    scheme="crank-nicolson")
    _, _, ratio = dt_halving_ratio(prob, tol=1e-11)
    assert 3.2 < ratio < 4.8


def test_crank_nicolson_beats_implicit_euler(grid512, mask512,
                                             unit_forcing512):
    fine = solve_heat(_problem(grid512, mask512, unit_forcing512, T=0.5,
                               dt=1.0 / 256.0), tol=1e-12)
    ie = solve_heat(_problem(grid512, mask512, unit_forcing512, T=0.5,
                             dt=1.0 / 16.0), tol=1e-12)
    cn = solve_heat(_problem(grid512, mask512, unit_forcing512, T=0.5,
                             dt=1.0 / 16.0, scheme="crank-nicolson"),
                    tol=1e-12)
    err_ie = trajectory_distance(ie, fine)
    err_cn = trajectory_distance(cn, fine)
    assert err_cn < 0.2 * err_ie


# ----------------------------------------------------------- trajectories

def test_stride_thins_snapshots_not_norms(grid512, mask512, unit_forcing512):
    full = solve_heat(_problem(grid512, mask512, unit_forcing512, T=0.5,
                               dt=1.0 / 32.0), stride=1)
    thin = solve_heat(_problem(grid512, mask512, unit_forcing512, T=0.5,
                               dt=1.0 / 32.0), stride=4)
    assert len(thin.times) < len(full.times)
    # the space-time norm is accumulated over every step regardless
    assert thin.space_time_norm == full.space_time_norm
    assert np.array_equal(thin.norms, full.norms)


def test_trajectory_distance_needs_aligned_grids(grid512, mask512,
                                                 unit_forcing512):
    a = solve_heat(_problem(grid512, mask512, unit_forcing512, T=0.5,
                            dt=1.0 / 8.0))
    b = solve_heat(_problem(grid512, mask512, unit_forcing512, T=0.5,
                            dt=1.0 / 12.0))
    with pytest.raises(ValidationError):
        trajectory_distance(a, b)  # 12 is not a multiple of 8


def test_trajectory_distance_rejects_thinned_input(grid512, mask512,
                                                   unit_forcing512):
    a = solve_heat(_problem(grid512, mask512, unit_forcing512, T=0.5,
                            dt=1.0 / 8.0), stride=2)
    b = solve_heat(_problem(grid512, mask512, unit_forcing512, T=0.5,
                            dt=1.0 / 16.0))
    with pytest.raises(ValidationError):
        trajectory_distance(a, b)


# ------------------------------------------------------------- experiment

def test_heat_experiment_small_mirror(grid512, mask512, seq512, limit512,
                                      unit_forcing512):
    report = heat_homog_experiment(
        seq512, mask512, 0.5, unit_forcing512, T=0.5, dt=1.0 / 32.0,
        n_list=[4, 8], predicted_limit=limit512)
    assert list(report.n_values) == [4, 8]
    np.testing.assert_allclose(
        report.discrepancies, [0.068686, 0.048019], rtol=2e-3)
    assert report.verdicts["monotone"]
    assert report.limit_norm > 0
    assert not any(report.failures)


def test_heat_experiment_constant_sequence_is_exact(grid512, mask512,
                                                    unit_forcing512):
    seq = periodic_sequence_1d(
        grid512, lambda x: 2.0 + 0.0 * x, alpha=1.0, beta=3.0)
    limit = predicted_limit_1d(seq, mask512)
    report = heat_homog_experiment(
        seq, mask512, 0.5, unit_forcing512, T=0.25, dt=1.0 / 16.0,
        n_list=[2, 4], predicted_limit=limit)
    assert max(report.discrepancies) == 0.0


def test_heat_experiment_threads_deterministic(grid512, mask512, seq512,
                                               limit512, unit_forcing512):
    r1 = heat_homog_experiment(
        seq512, mask512, 0.5, unit_forcing512, T=0.25, dt=1.0 / 16.0,
        n_list=[4, 8], predicted_limit=limit512, threads=1)
    r4 = heat_homog_experiment(
        seq512, mask512, 0.5, unit_forcing512, T=0.25, dt=1.0 / 16.0,
        n_list=[4, 8], predicted_limit=limit512, threads=4)
    assert np.array_equal(r1.discrepancies, r4.discrepancies)


# ---------------------------------------------------------------- file io

def test_trajectory_csv(tmp_path, grid512, mask512, unit_forcing512):
    traj = solve_heat(_problem(grid512, mask512, unit_forcing512, T=0.25,
                               dt=1.0 / 16.0))
    p = tmp_path / "trajectory.csv"
    write_trajectory_csv(p, traj)
    lines = p.read_text().strip().splitlines()
    assert lines[0] == "t,u_l2"
    assert len(lines) == 1 + len(traj.norms)


def test_heat_report_csv(tmp_path, grid512, mask512, seq512, limit512,
                         unit_forcing512):
    report = heat_homog_experiment(
        seq512, mask512, 0.5, unit_forcing512, T=0.25, dt=1.0 / 16.0,
        n_list=[4, 8], predicted_limit=limit512)
    p = tmp_path / "heat_report.csv"
    write_heat_report_csv(p, report)
    lines = p.read_text().strip().splitlines()
    assert lines[0].startswith("n,")
    assert len(lines) == 3
