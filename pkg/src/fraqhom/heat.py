"""Time stepping for the fractional heat problem du/dt - div_s(A grad_s u) = f
with zero initial data and exterior zero condition, plus the strong
space-time homogenisation experiment along coefficient families.

The spatial operator is the same midpoint-cell stiffness as the stationary
solver; with the cell mass h^d the weight cancels, so implicit Euler reads
(I + dt K) u_{k+1} = u_k + dt f_{k+1} on the packed inside values.
"""

import concurrent.futures
import csv
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg, gmres

from .dirichlet import GMRES_RESTART, SolverError, _as_order, _stiffness_matvec
from .fracops import table_for
from .homog import predicted_limit_1d
from .lattice import ScalarField, ValidationError, validate_coefficient

HEAT_TOL = 1e-10
SCHEMES = ("implicit-euler", "crank-nicolson")


def _zero_forcing(k):
    return None


@dataclass(frozen=True)
class HeatProblem:
    mask: object
    coeff: object
    s: object
    T: float
    dt: float
    forcing: object = None     # callable: time index k -> ScalarField or None
    scheme: str = "implicit-euler"

    def __post_init__(self):
        object.__setattr__(self, "s", _as_order(self.s, self.mask.grid.dim))
        if self.coeff.grid != self.mask.grid:
            raise ValidationError("coefficient and mask live on different grids")
        report = validate_coefficient(self.coeff)
        if not report.valid:
            raise ValidationError("coefficient violates its class bounds")
        if not self.T > 0.0 or not self.dt > 0.0:
            raise ValidationError("T and dt must be positive")
        n = round(self.T / self.dt)
        if n < 1 or abs(n * self.dt - self.T) > 0.5 * self.dt:
            raise ValidationError("dt must divide T within half a step")
        if self.scheme not in SCHEMES:
            raise ValidationError(f"unknown scheme {self.scheme!r}")
        if self.forcing is None:
            object.__setattr__(self, "forcing", _zero_forcing)
        elif isinstance(self.forcing, ScalarField):
            field = self.forcing
            object.__setattr__(self, "forcing", lambda k: field)
        elif not callable(self.forcing):
            raise ValidationError("forcing must be None, a ScalarField, or a callable")

    @property
    def n_steps(self):
        return round(self.T / self.dt)


@dataclass(frozen=True)
class HeatTrajectory:
    mask: object
    dt: float
    times: np.ndarray        # kept snapshot times, always including t=0
    values: np.ndarray       # (len(times), n_inside) packed inside values
    norms: np.ndarray        # ||u(t_k)||_{L2(Omega)} for every step
    norm_times: np.ndarray
    space_time_norm: float   # trapezoid-in-time L2(0,T;L2(Omega))

    def field(self, i):
        grid = self.mask.grid
        full = np.zeros(grid.shape)
        full[self.mask.inside] = self.values[i]
        return ScalarField(grid, full)


def _packed_forcing(problem, k):
    f = problem.forcing(k)
    if f is None:
        return None
    if f.grid != problem.mask.grid:
        raise ValidationError(f"forcing at step {k} lives on the wrong grid")
    vals = f.values
    if not np.all(np.isfinite(vals)):
        raise ValidationError(f"forcing at step {k} is not finite")
    if np.any(vals[~problem.mask.inside] != 0.0):
        raise ValidationError(f"forcing at step {k} does not vanish outside the mask")
    return vals[problem.mask.inside]


def _shifted_preconditioner(table, s, dt, mask):
    lap = table.laplacian_multiplier(2.0 * float(s))
    inv = 1.0 / (1.0 + dt * lap)
    grid = mask.grid
    inside = mask.inside

    def apply(x):
        full = np.zeros(grid.shape)
        full[inside] = x
        out = np.fft.ifftn(inv * np.fft.fftn(full))
        return np.ascontiguousarray(out.real[inside])

    return apply


def _krylov_shifted(apply_op, apply_m, symmetric, b, tol, max_iter):
    n = b.shape[0]
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0
    op = LinearOperator((n, n), matvec=apply_op)
    pre = LinearOperator((n, n), matvec=apply_m)
    count = [0]

    def tick(_):
        count[0] += 1

    rtol = 0.25 * tol
    if symmetric:
        x, info = cg(op, b, rtol=rtol, atol=0.0, maxiter=max_iter, M=pre,
                     callback=tick)
    else:
        x, info = gmres(op, b, rtol=rtol, atol=0.0, maxiter=max_iter, M=pre,
                        restart=GMRES_RESTART, callback=tick,
                        callback_type="pr_norm")
    residual = np.linalg.norm(apply_op(x) - b) / bnorm
    if residual > tol:
        raise SolverError(
            f"time-step solve stalled at relative residual {residual:.3e}",
            residual=residual, iterations=count[0])
    return x, count[0]


def step(u_k, f_next, coeff, s, dt, mask, scheme="implicit-euler",
         tol=HEAT_TOL):
    """One time step on full-grid fields; u_k must vanish outside the mask."""
    if scheme not in SCHEMES:
        raise ValidationError(f"unknown scheme {scheme!r}")
    if np.any(u_k.values[~mask.inside] != 0.0):
        raise ValidationError("state does not vanish outside the mask")
    grid = mask.grid
    order = _as_order(s, grid.dim)
    table = table_for(grid, order.s)
    apply_k = _stiffness_matvec(table, coeff, mask)
    u_in = u_k.values[mask.inside]
    f_in = np.zeros(mask.n_inside)
    if f_next is not None:
        f_in = f_next.values[mask.inside]
    weight = dt if scheme == "implicit-euler" else 0.5 * dt

    def apply_op(x):
        return x + weight * apply_k(x)

    b = u_in + dt * f_in
    if scheme == "crank-nicolson":
        b = u_in - 0.5 * dt * apply_k(u_in) + dt * f_in
    apply_m = _shifted_preconditioner(table, order.s, weight, mask)
    x, _ = _krylov_shifted(apply_op, apply_m, coeff.is_symmetric, b, tol,
                           10 * mask.n_inside)
    full = np.zeros(grid.shape)
    full[mask.inside] = x
    return ScalarField(grid, full)


def solve_heat(problem, tol=HEAT_TOL, stride=1):
    """March from u(0)=0, recording snapshots every `stride` steps (plus the
    final one) and the trapezoid space-time norm over all steps."""
    mask = problem.mask
    grid = mask.grid
    table = table_for(grid, problem.s.s)
    apply_k = _stiffness_matvec(table, problem.coeff, mask)
    dt = problem.dt
    n_steps = problem.n_steps
    symmetric = problem.coeff.is_symmetric
    implicit = problem.scheme == "implicit-euler"
    weight = dt if implicit else 0.5 * dt
    apply_m = _shifted_preconditioner(table, problem.s.s, weight, mask)

    def apply_op(x):
        return x + weight * apply_k(x)

    cell = np.sqrt(grid.cell_volume)
    u = np.zeros(mask.n_inside)
    kept = [u.copy()]
    kept_t = [0.0]
    norms = [0.0]
    sq_sum = 0.0  # trapezoid accumulates half the endpoint squares
    f_prev = _packed_forcing(problem, 0) if not implicit else None
    for k in range(1, n_steps + 1):
        f_next = _packed_forcing(problem, k)
        if implicit:
            b = u if f_next is None else u + dt * f_next
        else:
            b = u - 0.5 * dt * apply_k(u)
            mean = None
            if f_prev is not None or f_next is not None:
                zero = np.zeros(mask.n_inside)
                mean = 0.5 * ((f_prev if f_prev is not None else zero)
                              + (f_next if f_next is not None else zero))
            if mean is not None:
                b = b + dt * mean
            f_prev = f_next
        try:
            u, _ = _krylov_shifted(apply_op, apply_m, symmetric, b, tol,
                                   10 * mask.n_inside)
        except SolverError as exc:
            raise SolverError(f"step {k} (t={k * dt:g}): {exc}",
                              residual=exc.residual,
                              iterations=exc.iterations)
        nk = cell * np.linalg.norm(u)
        norms.append(nk)
        half = 1.0 if k < n_steps else 0.5
        sq_sum += half * nk * nk
        if k % stride == 0 or k == n_steps:
            kept.append(u.copy())
            kept_t.append(k * dt)
    return HeatTrajectory(
        mask=mask, dt=dt, times=np.array(kept_t), values=np.array(kept),
        norms=np.array(norms), norm_times=dt * np.arange(n_steps + 1),
        space_time_norm=float(np.sqrt(dt * sq_sum)),
    )


def trajectory_distance(coarse, fine):
    """L2(0,T;L2(Omega)) distance evaluated on the coarse snapshot times;
    both trajectories must have kept every step on their own grids."""
    if coarse.mask is not fine.mask and not np.array_equal(
            coarse.mask.inside, fine.mask.inside):
        raise ValidationError("trajectories live on different masks")
    for traj in (coarse, fine):
        if len(traj.times) != round(traj.times[-1] / traj.dt) + 1:
            raise ValidationError("distance needs unthinned trajectories")
    idx = []
    for t in coarse.times:
        j = int(round(t / fine.dt))
        if j >= len(fine.times) or abs(fine.times[j] - t) > 1e-9 * max(coarse.dt, 1.0):
            raise ValidationError("snapshot times do not align")
        idx.append(j)
    cell = np.sqrt(coarse.mask.grid.cell_volume)
    diffs = coarse.values - fine.values[idx]
    nk = cell * np.linalg.norm(diffs, axis=1)
    w = np.ones(len(nk))
    w[0] = w[-1] = 0.5
    return float(np.sqrt(coarse.dt * np.sum(w * nk * nk)))


def dt_halving_ratio(problem, tol=HEAT_TOL):
    """Richardson check: first-order stepping halves the self-discrepancy
    when dt is halved. Returns (d1, d2, d1/d2)."""
    base = solve_heat(problem, tol=tol)
    half = solve_heat(
        HeatProblem(mask=problem.mask, coeff=problem.coeff, s=problem.s,
                    T=problem.T, dt=problem.dt / 2.0,
                    forcing=_rescaled_forcing(problem, 2),
                    scheme=problem.scheme), tol=tol)
    quarter = solve_heat(
        HeatProblem(mask=problem.mask, coeff=problem.coeff, s=problem.s,
                    T=problem.T, dt=problem.dt / 4.0,
                    forcing=_rescaled_forcing(problem, 4),
                    scheme=problem.scheme), tol=tol)
    d1 = trajectory_distance(base, half)
    d2 = trajectory_distance(half, quarter)
    if d2 == 0.0:
        raise ValidationError("refinement discrepancy vanished; nothing to compare")
    return d1, d2, d1 / d2


def _rescaled_forcing(problem, factor):
    # refined step k sits inside coarse interval ceil(k/factor); holding the
    # forcing there means every refinement solves the same piecewise-constant
    # forcing in time, which keeps the Richardson comparison consistent
    inner = problem.forcing

    def forcing(k):
        return inner((k + factor - 1) // factor)

    return forcing


# ---------------------------------------------------------------------------
# homogenisation experiment

REPORT_COLUMNS = ["n", "discrepancy", "failure"]


@dataclass(frozen=True)
class HeatReport:
    n_values: tuple
    discrepancies: tuple
    failures: tuple
    limit_norm: float
    verdicts: dict


def heat_homog_experiment(sequence, mask, s, f, T, dt, n_list,
                          predicted_limit=None, rel_tol=0.05, tol=HEAT_TOL,
                          threads=1):
    """Strong L2(0,T;L2(Omega)) convergence of trajectories along a family.

    Forcing f is shared by every member and the limit problem; the limit
    coefficient defaults to the closed-form 1D prediction.
    """
    n_list = [int(n) for n in n_list]
    if predicted_limit is None:
        predicted_limit = predicted_limit_1d(sequence, mask)
    limit_problem = HeatProblem(mask=mask, coeff=predicted_limit, s=s, T=T,
                                dt=dt, forcing=f)
    limit_traj = solve_heat(limit_problem, tol=tol)
    if limit_traj.space_time_norm == 0.0:
        raise ValidationError("limit trajectory vanishes; discrepancies are meaningless")

    def one_n(n):
        member = sequence.member(n)
        traj = solve_heat(HeatProblem(mask=mask, coeff=member, s=s, T=T,
                                      dt=dt, forcing=f), tol=tol)
        return trajectory_distance(limit_traj, traj) / limit_traj.space_time_norm

    rows = {}
    failures = {}
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            futs = {pool.submit(one_n, n): n for n in n_list}
            for fut in concurrent.futures.as_completed(futs):
                n = futs[fut]
                try:
                    rows[n] = fut.result()
                except (SolverError, ValidationError) as exc:
                    failures[n] = str(exc)
    else:
        for n in n_list:
            try:
                rows[n] = one_n(n)
            except (SolverError, ValidationError) as exc:
                failures[n] = str(exc)

    vals = [rows[n] for n in n_list if n in rows]
    clean = not failures
    decreasing = bool(clean and vals and all(
        vals[i + 1] <= vals[i] * (1.0 + 1e-12) for i in range(len(vals) - 1)))
    final_ok = bool(clean and vals and vals[-1] < rel_tol)
    verdicts = {"monotone": decreasing, "final": final_ok,
                "strong_l2": decreasing and final_ok}
    return HeatReport(
        n_values=tuple(n_list),
        discrepancies=tuple(rows.get(n) for n in n_list),
        failures=tuple(failures.get(n) for n in n_list),
        limit_norm=limit_traj.space_time_norm, verdicts=verdicts,
    )


def write_trajectory_csv(path, trajectory):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "u_l2"])
        for t, v in zip(trajectory.norm_times, trajectory.norms):
            w.writerow([repr(float(t)), repr(float(v))])


def write_heat_report_csv(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for i, n in enumerate(report.n_values):
            d = report.discrepancies[i]
            w.writerow([n, "" if d is None else repr(d),
                        report.failures[i] or ""])
