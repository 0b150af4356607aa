"""Homogenisation laboratory.

Oscillating coefficient sequences, convergence reports against a predicted
limit, the d_s metric on coefficient classes and its global extension, the
1D closed-form limit (harmonic mean inside, arithmetic mean or a fixed
exterior outside), and the shifted kernel family of the fractional
divergence.  All probe placements are deterministic so that re-runs produce
byte-identical reports.
"""

import concurrent.futures
import csv
import hashlib
import os
import threading
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.ndimage import distance_transform_edt

from .dirichlet import DirichletProblem, SolverError, hminus_norm, solve
from .fracops import RESIDUE_TOL, grad_raw, grad_s, table_for
from .lattice import (
    Coefficient,
    OmegaMask,
    ScalarField,
    ValidationError,
    VectorField,
    restrict_to_mask,
    scalar_coefficient,
    validate_coefficient,
)

DEFAULT_REL_TOL = 0.05
PROFILE_SAMPLES = 4096


def default_threads():
    return max(1, int(os.environ.get("FRAQHOM_THREADS", "1")))


# ---------------------------------------------------------------------------
# coefficient sequences

@dataclass(frozen=True)
class CoefficientSequence:
    """Lazy family n -> A_n in M(alpha, beta); members validate on access."""

    grid: object
    generator: object            # n -> Coefficient
    family: str                  # periodic-1d | checkerboard-2d | layered-2d | custom
    alpha: float
    beta: float
    profile: object = None       # period-1 profile, periodic-1d only
    mask: OmegaMask = None       # set when the oscillation is confined to Omega
    exterior_value: float = None

    def member(self, n):
        n = int(n)
        if n < 1:
            raise ValidationError("sequence index must be a positive integer")
        coeff = self.generator(n)
        if coeff.grid != self.grid:
            raise ValidationError("generator returned a coefficient on the wrong grid")
        report = validate_coefficient(coeff)
        if not report.valid:
            raise ValidationError(
                f"member n={n} leaves M(alpha, beta): lower margin "
                f"{report.lower_margin:.3e}, inverse margin {report.inverse_margin:.3e}"
            )
        return coeff

    def transposed(self):
        gen = self.generator
        return CoefficientSequence(
            grid=self.grid,
            generator=lambda n: gen(n).transpose(),
            family=self.family,
            alpha=self.alpha,
            beta=self.beta,
            profile=self.profile,
            mask=self.mask,
            exterior_value=self.exterior_value,
        )


def _sample_profile(profile, y):
    try:
        vals = np.asarray(profile(y), dtype=float)
        if vals.shape == y.shape:
            return vals
    except Exception:
        pass
    return np.array([float(profile(float(t))) for t in y.ravel()]).reshape(y.shape)


def _check_profile(profile):
    y = (np.arange(PROFILE_SAMPLES) + 0.5) / PROFILE_SAMPLES
    vals = _sample_profile(profile, y)
    if not np.all(np.isfinite(vals)) or vals.min() <= 0.0:
        raise ValidationError("profile must be positive on the period")
    return vals


def periodic_sequence_1d(grid, profile, alpha, beta, mask=None, exterior_value=None):
    """A_n(x) = a(n x) for a period-1 profile a, on the whole line or on a mask.

    With a mask the oscillation is confined to Omega and the exterior is the
    fixed constant exterior_value (required in that case).
    """
    if grid.dim != 1:
        raise ValidationError("periodic_sequence_1d needs a 1d grid")
    _check_profile(profile)
    if mask is not None:
        if exterior_value is None:
            raise ValidationError("a masked sequence needs exterior_value")
        exterior_value = float(exterior_value)
    x = grid.axis()

    def generator(n):
        vals = _sample_profile(profile, np.mod(n * x, 1.0))
        if mask is not None:
            vals = np.where(mask.inside, vals, exterior_value)
        return scalar_coefficient(grid, vals, alpha, beta)

    return CoefficientSequence(
        grid=grid, generator=generator, family="periodic-1d", alpha=alpha,
        beta=beta, profile=profile, mask=mask, exterior_value=exterior_value,
    )


def layered_sequence_2d(grid, entries, alpha, beta):
    """Laminate along the first axis: A_n(x, y)_ij = entries[i][j](n x).

    entries is a 2x2 nest of period-1 profiles (constants allowed).
    """
    if grid.dim != 2:
        raise ValidationError("layered_sequence_2d needs a 2d grid")
    fns = [[entries[i][j] for j in range(2)] for i in range(2)]
    x = grid.axis()[:, None] * np.ones(grid.points_per_axis)[None, :]

    def generator(n):
        y = np.mod(n * x, 1.0)
        m = np.empty((2, 2) + grid.shape)
        for i in range(2):
            for j in range(2):
                fn = fns[i][j]
                m[i, j] = _sample_profile(fn, y) if callable(fn) else float(fn)
        return Coefficient(grid, m, alpha, beta)

    return CoefficientSequence(grid=grid, generator=generator,
                               family="layered-2d", alpha=alpha, beta=beta)


def checkerboard_sequence_2d(grid, value_a, value_b, alpha, beta):
    """a(x) I alternating between two values on 1/(2n)-period checker cells."""
    if grid.dim != 2:
        raise ValidationError("checkerboard_sequence_2d needs a 2d grid")
    xm, ym = grid.mesh()

    def generator(n):
        parity = (np.floor(2.0 * n * xm) + np.floor(2.0 * n * ym)).astype(int) % 2
        vals = np.where(parity == 0, float(value_a), float(value_b))
        return scalar_coefficient(grid, vals, alpha, beta)

    return CoefficientSequence(grid=grid, generator=generator,
                               family="checkerboard-2d", alpha=alpha, beta=beta)


# ---------------------------------------------------------------------------
# closed-form 1d limits

def harmonic_mean(profile):
    val, err = quad(lambda y: 1.0 / float(profile(y)), 0.0, 1.0,
                    epsabs=1e-12, epsrel=1e-12, limit=500)
    if not np.isfinite(val) or val <= 0.0:
        raise ValidationError("profile reciprocal is not integrable")
    return 1.0 / val


def arithmetic_mean(profile):
    val, err = quad(lambda y: float(profile(y)), 0.0, 1.0,
                    epsabs=1e-12, epsrel=1e-12, limit=500)
    if not np.isfinite(val):
        raise ValidationError("profile is not integrable")
    return val


def predicted_limit_1d(sequence, mask):
    """Harmonic mean inside the mask; arithmetic mean (whole-line families)
    or the fixed exterior value outside."""
    if sequence.family != "periodic-1d" or sequence.profile is None:
        raise ValidationError("closed-form limit exists for the periodic-1d family only")
    if sequence.mask is not None and not np.array_equal(sequence.mask.inside, mask.inside):
        raise ValidationError("sequence was built for a different mask")
    inside_value = harmonic_mean(sequence.profile)
    if sequence.mask is not None:
        outside_value = sequence.exterior_value
    else:
        outside_value = arithmetic_mean(sequence.profile)
    vals = np.where(mask.inside, inside_value, outside_value)
    return scalar_coefficient(sequence.grid, vals, sequence.alpha, sequence.beta)


# ---------------------------------------------------------------------------
# probe construction (all deterministic)

def _real_mode_functions(dim):
    """Yield (freq_vector, per-axis trig choices) ordered by total frequency."""
    total = 0
    while True:
        ks = []
        if dim == 1:
            ks = [(total,)]
        else:
            ks = [(k, total - k) for k in range(total, -1, -1)]
        for k in ks:
            choices = []
            for kj in k:
                choices.append([("cos",)] if kj == 0 else [("cos",), ("sin",)])
            # expand the cos/sin combinations in a fixed order
            combos = [[]]
            for ch in choices:
                combos = [c + list(opt) for c in combos for opt in ch]
            for combo in combos:
                yield k, tuple(combo)
        total += 1


def _eval_mode(ts, k, combo):
    vals = 1.0
    for t, kj, kind in zip(ts, k, combo):
        phase = 2.0 * np.pi * kj * t
        vals = vals * (np.cos(phase) if kind == "cos" else np.sin(phase))
    return vals


def trig_probes(mask, count):
    """First `count` bounding-box trigonometric modes restricted to the mask,
    L2(Omega)-normalized, ordered by total frequency."""
    grid = mask.grid
    mesh = grid.mesh()
    h = grid.spacing
    ts = []
    for axis in range(grid.dim):
        coords = mesh[axis][mask.inside]
        lo, hi = coords.min() - 0.5 * h, coords.max() + 0.5 * h
        ts.append((mesh[axis] - lo) / (hi - lo))
    out = []
    meta = []
    for k, combo in _real_mode_functions(grid.dim):
        vals = _eval_mode(ts, k, combo) * mask.inside
        scale = np.sqrt(grid.cell_volume * np.sum(vals * vals))
        if scale < 1e-12:
            continue
        out.append(ScalarField(grid, vals / scale))
        meta.append((k, combo))
        if len(out) == count:
            return out, meta
    raise ValidationError("mode enumeration exhausted")  # pragma: no cover


def box_mode_probes(grid, count):
    """First `count` full-box Fourier modes as unit vector fields, the mode
    cycling through the components."""
    mesh = grid.mesh()
    ts = [(m + grid.half_width) / (2.0 * grid.half_width) for m in mesh]
    out = []
    meta = []
    gen = _real_mode_functions(grid.dim)
    comp = 0
    for k, combo in gen:
        vals = _eval_mode(ts, k, combo)
        scale = np.sqrt(grid.cell_volume * np.sum(vals * vals))
        if scale < 1e-12:
            continue
        stack = np.zeros((grid.dim,) + grid.shape)
        stack[comp] = vals / scale
        out.append(VectorField(grid, stack))
        meta.append((k, combo, comp))
        comp = (comp + 1) % grid.dim
        if len(out) == count:
            return out, meta
    raise ValidationError("mode enumeration exhausted")  # pragma: no cover


def _periodic_delta(coords, center, width):
    d = np.abs(coords - center)
    return np.minimum(d, width - d)


def _smooth_bump(grid, center, radius):
    mesh = grid.mesh()
    rho2 = 0.0
    for c, m in zip(center, mesh):
        d = _periodic_delta(m, c, 2.0 * grid.half_width)
        rho2 = rho2 + d * d
    t2 = rho2 / (radius * radius)
    vals = np.zeros(grid.shape)
    core = t2 < 1.0
    vals[core] = np.exp(1.0 - 1.0 / (1.0 - t2[core]))
    return vals


def bump_probes(mask, count, region):
    """`count` smooth bumps in the mask ("inside") or its complement
    ("complement"), placed by farthest-point sampling on the distance
    transform and kept >= 2h away from the region boundary; L1-normalized."""
    grid = mask.grid
    h = grid.spacing
    if region == "inside":
        indicator = mask.inside
    elif region == "complement":
        indicator = ~mask.inside
    else:
        raise ValidationError(f"unknown probe region {region!r}")
    dist = distance_transform_edt(indicator, sampling=h)
    deepest = float(dist.max())
    if deepest <= 4.0 * h:
        raise ValidationError(f"no room for probes in the {region} region")
    radius = min(max(4.0 * h, 0.25 * (deepest - 2.0 * h)), deepest - 2.0 * h)
    eligible = np.argwhere(dist >= radius + 2.0 * h)
    if eligible.shape[0] < count:
        raise ValidationError(f"only {eligible.shape[0]} cells can host probes")
    mesh = grid.mesh()
    coords = np.stack([mesh[a][tuple(eligible.T)] for a in range(grid.dim)], axis=1)
    depth = dist[tuple(eligible.T)]

    chosen = [int(np.argmax(depth))]
    width = 2.0 * grid.half_width
    sep = np.full(coords.shape[0], np.inf)
    for _ in range(count - 1):
        delta = coords - coords[chosen[-1]]
        delta = np.abs(delta)
        delta = np.minimum(delta, width - delta)
        sep = np.minimum(sep, np.sqrt(np.sum(delta * delta, axis=1)))
        chosen.append(int(np.argmax(sep)))

    fields = []
    centers = []
    for idx in chosen:
        center = coords[idx]
        vals = _smooth_bump(grid, center, radius)
        total = grid.cell_volume * vals.sum()
        fields.append(ScalarField(grid, vals / total))
        centers.append(tuple(float(c) for c in center))
    return fields, {"centers": centers, "radius": float(radius)}


# ---------------------------------------------------------------------------
# the d_s metric

class _MetricBasis:
    """Probe fields f_k with their H^-s(Omega) norms, grown on demand."""

    def __init__(self, mask, s, tol):
        self.mask = mask
        self.s = s
        self.tol = tol
        self._terms = []
        self._lock = threading.Lock()

    def terms(self, count):
        with self._lock:
            if len(self._terms) < count:
                probes, _ = trig_probes(self.mask, count)
                for k in range(len(self._terms), count):
                    fnorm = hminus_norm(probes[k], self.s, self.mask, tol=self.tol)
                    self._terms.append((probes[k], fnorm))
            return self._terms[:count]


_BASES = {}
_BASES_LOCK = threading.Lock()


def _basis_for(mask, s, tol):
    grid = mask.grid
    digest = hashlib.sha256(mask.inside.tobytes()).hexdigest()
    key = (grid.dim, grid.points_per_axis, grid.half_width, float(s), digest)
    with _BASES_LOCK:
        basis = _BASES.get(key)
        if basis is None:
            basis = _MetricBasis(mask, float(s), tol)
            _BASES[key] = basis
    return basis


def _metric_solutions(coeff, mask, s, n_terms, tol):
    basis = _basis_for(mask, s, tol)
    out = []
    for fk, fnorm in basis.terms(n_terms):
        sol = solve(DirichletProblem(mask=mask, coeff=coeff, s=s, rhs=fk), tol=tol)
        out.append((sol.u, sol.flux, fnorm))
    return out


def _metric_sum(side_a, side_b, mask, s, tol):
    grid = mask.grid
    total = 0.0
    for k, ((ua, fa, fnorm), (ub, fb, _)) in enumerate(zip(side_a, side_b), start=1):
        du = ua.values - ub.values
        sol_term = np.sqrt(grid.cell_volume * np.sum(du * du))
        dflux = restrict_to_mask(VectorField(grid, fa.values - fb.values), mask)
        flux_term = hminus_norm(dflux, s, mask, tol=tol)
        total += 2.0 ** (-k) * (sol_term + flux_term) / fnorm
    return total


def ds_metric(coeff_a, coeff_b, mask, s, n_terms=16, tol=1e-10):
    """Truncated metric sum_k 2^-k (||u_k - v_k|| + ||A grad u_k - B grad v_k||_{H^-s}) / ||f_k||.

    The probe family is the bounding-box trigonometric system restricted to
    Omega; each term is invariant under rescaling of f_k, so the probes are
    used L2-normalized.  Identical coefficients give 0 up to solver noise and
    the two arguments enter through the same code path, so the value is
    symmetric exactly.
    """
    side_a = _metric_solutions(coeff_a, mask, s, n_terms, tol)
    side_b = _metric_solutions(coeff_b, mask, s, n_terms, tol)
    return _metric_sum(side_a, side_b, mask, s, tol)


def global_metric(coeff_a, coeff_b, mask, s, n_terms=16, n_bumps=8, tol=1e-10):
    """ds_metric on Omega plus a weak-* surrogate on the complement:
    sum_k 2^-k sum_ij |<(A - B)_ij, chi_k>| over L1-normalized bumps chi_k."""
    ds_part = ds_metric(coeff_a, coeff_b, mask, s, n_terms=n_terms, tol=tol)
    bumps, _ = bump_probes(mask, n_bumps, "complement")
    grid = mask.grid
    star = 0.0
    diff = coeff_a.matrix - coeff_b.matrix
    for k, chi in enumerate(bumps, start=1):
        pair = 0.0
        for i in range(grid.dim):
            for j in range(grid.dim):
                pair += abs(grid.cell_volume * np.sum(diff[i, j] * chi.values))
        star += 2.0 ** (-k) * pair
    return ds_part + star


# ---------------------------------------------------------------------------
# convergence experiments

@dataclass(frozen=True)
class ConvergenceReport:
    n_values: tuple
    solution_l2: tuple          # ||u_n - u*||_L2(Omega)
    solution_weak: tuple        # max_k |<u_n - u*, phi_k>|
    flux_weak: tuple            # max_k |<sigma_n - sigma*, psi_k>|
    energy: tuple               # E_n
    coeff_weakstar: tuple       # max_k,ij |<(A_n - A*)_ij, chi_k>|
    energy_density_weak: tuple  # max_k |<sigma_n . grad u_n - sigma* . grad u*, b_k>|
    ds_estimates: tuple         # d_s(A_n, A*), truncated series
    failures: tuple             # per-n error message or None
    u_star_norm: float
    flux_star_norm: float
    energy_star: float
    coeff_star_scale: float     # max |A*_ij|, scale for the weak-* column
    density_star_scale: float   # max_k |<sigma* . grad u*, b_k>|
    verdicts: dict
    probes: dict


def _column_verdict(values, scale, rel_tol):
    vals = [v for v in values if v is not None]
    if not vals or scale <= 0.0:
        return False
    if vals[-1] >= rel_tol * scale:
        return False
    tail = vals[-3:]
    return all(tail[i + 1] <= tail[i] * (1.0 + 1e-12) + 1e-30 for i in range(len(tail) - 1))


def run_homog_experiment(sequence, mask, s, f, n_list, predicted_limit=None,
                         rel_tol=DEFAULT_REL_TOL, ds_terms=8, tol=1e-10,
                         threads=None):
    """Solve along the sequence and report every convergence diagnostic.

    With a predicted limit the columns compare against its solution; without
    one the largest n in n_list serves as the reference and is dropped from
    the comparison rows (a Cauchy surrogate for families with no closed-form
    limit).  Per-n solves run in parallel when threads > 1; assembly order is
    fixed by n_list, so the report does not depend on the thread count.
    """
    grid = mask.grid
    n_list = [int(n) for n in n_list]
    if sorted(n_list) != n_list or len(set(n_list)) != len(n_list):
        raise ValidationError("n_list must be strictly increasing")
    if threads is None:
        threads = default_threads()

    if predicted_limit is None:
        star_coeff = sequence.member(n_list[-1])
        rows = n_list[:-1]
        reference = f"member n={n_list[-1]}"
    else:
        star_coeff = predicted_limit
        rows = list(n_list)
        reference = "predicted limit"

    table = table_for(grid, float(s) if not hasattr(s, "s") else s.s)
    star_sol = solve(DirichletProblem(mask=mask, coeff=star_coeff, s=s, rhs=f), tol=tol)
    star_grad = grad_raw(table, star_sol.u.values)
    star_density = np.sum(star_sol.flux.values * star_grad, axis=0)
    star_metric_side = _metric_solutions(star_coeff, mask, s, ds_terms, tol)

    phi, phi_meta = trig_probes(mask, 8)
    psi, psi_meta = box_mode_probes(grid, 8)
    chi, chi_meta = bump_probes(mask, 8, "complement")
    dens_bumps, dens_meta = bump_probes(mask, 4, "inside")

    u_star_norm = float(np.sqrt(grid.cell_volume * np.sum(star_sol.u.values ** 2)))
    flux_star_norm = float(np.sqrt(grid.cell_volume * np.sum(star_sol.flux.values ** 2)))
    coeff_star_scale = float(np.max(np.abs(star_coeff.matrix)))
    density_star_pairs = [
        abs(grid.cell_volume * np.sum(star_density * b.values)) for b in dens_bumps
    ]
    density_star_scale = float(max(density_star_pairs))

    cv = grid.cell_volume

    def one_row(n):
        coeff_n = sequence.member(n)
        sol = solve(DirichletProblem(mask=mask, coeff=coeff_n, s=s, rhs=f), tol=tol)
        du = sol.u.values - star_sol.u.values
        l2 = float(np.sqrt(cv * np.sum(du * du)))
        weak = max(abs(cv * np.sum(du * p.values)) for p in phi)
        dflux = sol.flux.values - star_sol.flux.values
        fw = max(abs(cv * np.sum(dflux * p.values)) for p in psi)
        dcoeff = coeff_n.matrix - star_coeff.matrix
        ws = max(
            abs(cv * np.sum(dcoeff[i, j] * c.values))
            for c in chi for i in range(grid.dim) for j in range(grid.dim)
        )
        grad_n = grad_raw(table, sol.u.values)
        density = np.sum(sol.flux.values * grad_n, axis=0)
        ed = max(
            abs(cv * np.sum((density - star_density) * b.values)) for b in dens_bumps
        )
        side_n = _metric_solutions(coeff_n, mask, s, ds_terms, tol)
        dsv = _metric_sum(side_n, star_metric_side, mask, s, tol)
        return (l2, float(weak), float(fw), float(sol.energy), float(ws),
                float(ed), float(dsv))

    results = {}
    failures = {}
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(one_row, n): n for n in rows}
            for fut in concurrent.futures.as_completed(futures):
                n = futures[fut]
                try:
                    results[n] = fut.result()
                except (SolverError, ValidationError) as exc:
                    failures[n] = str(exc)
    else:
        for n in rows:
            try:
                results[n] = one_row(n)
            except (SolverError, ValidationError) as exc:
                failures[n] = str(exc)

    def column(i):
        return tuple(results[n][i] if n in results else None for n in rows)

    solution_l2 = column(0)
    solution_weak = column(1)
    flux_weak = column(2)
    energy = column(3)
    coeff_weakstar = column(4)
    energy_density_weak = column(5)
    ds_estimates = column(6)
    failure_col = tuple(failures.get(n) for n in rows)

    clean = not failures
    verdicts = {
        "solution_l2": clean and _column_verdict(solution_l2, u_star_norm, rel_tol),
        "solution_weak": clean and _column_verdict(solution_weak, u_star_norm, rel_tol),
        "flux_weak": clean and _column_verdict(flux_weak, flux_star_norm, rel_tol),
        "energy": clean and _column_verdict(
            tuple(None if e is None else abs(e - star_sol.energy) for e in energy),
            abs(star_sol.energy), rel_tol),
        "coeff_weakstar": clean and _column_verdict(coeff_weakstar, coeff_star_scale, rel_tol),
        "energy_density": clean and _column_verdict(
            energy_density_weak, density_star_scale, rel_tol),
    }
    verdicts["gs"] = verdicts["solution_l2"] and verdicts["solution_weak"]
    verdicts["hs"] = verdicts["gs"] and verdicts["flux_weak"]

    probes = {
        "reference": reference,
        "solution_modes": phi_meta,
        "flux_modes": psi_meta,
        "weakstar_bumps": chi_meta,
        "energy_bumps": dens_meta,
        "ds_terms": ds_terms,
        "rel_tol": rel_tol,
    }
    return ConvergenceReport(
        n_values=tuple(rows),
        solution_l2=solution_l2,
        solution_weak=solution_weak,
        flux_weak=flux_weak,
        energy=energy,
        coeff_weakstar=coeff_weakstar,
        energy_density_weak=energy_density_weak,
        ds_estimates=ds_estimates,
        failures=failure_col,
        u_star_norm=u_star_norm,
        flux_star_norm=flux_star_norm,
        energy_star=float(star_sol.energy),
        coeff_star_scale=coeff_star_scale,
        density_star_scale=density_star_scale,
        verdicts=verdicts,
        probes=probes,
    )


REPORT_COLUMNS = [
    "n", "solution_l2", "solution_weak", "flux_weak", "energy",
    "coeff_weakstar", "energy_density_weak", "ds_estimate",
    "u_star_norm", "flux_star_norm", "energy_star", "failure",
]


def write_report_csv(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for i, n in enumerate(report.n_values):
            def cell(col):
                v = col[i]
                return "" if v is None else repr(float(v))
            w.writerow([
                n, cell(report.solution_l2), cell(report.solution_weak),
                cell(report.flux_weak), cell(report.energy),
                cell(report.coeff_weakstar), cell(report.energy_density_weak),
                cell(report.ds_estimates), repr(report.u_star_norm),
                repr(report.flux_star_norm), repr(report.energy_star),
                report.failures[i] or "",
            ])


def write_verdicts_csv(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["verdict", "pass"])
        for name in sorted(report.verdicts):
            w.writerow([name, str(bool(report.verdicts[name]))])


# ---------------------------------------------------------------------------
# the kernel family of div_s

def kernel_family_1d(mask, s, shift_list):
    """Fields F_n with spectral D^s F_n supported away from Omega.

    The generator is w = psi' for a smooth bump psi living in the room
    (M, L-2) to the right of Omega (so that the integral of w vanishes), and
    F_n inverts the gradient multiplier on the shifted spectrum:
    F_hat_n = exp(-i t_n xi) w_hat(xi) / (i xi |xi|^(s-1)), zero mode dropped.
    Shifts must be grid multiples so the shifted samples keep their support
    exactly.
    """
    grid = mask.grid
    if grid.dim != 1:
        raise ValidationError("the kernel construction is one-dimensional")
    h = grid.spacing
    half = grid.half_width
    x = grid.axis()
    occupied = x[mask.inside]
    room_lo = float(occupied.max()) + 0.5 * h
    room_hi = half - 2.0
    width = room_hi - room_lo
    if width < 16.0 * h:
        raise ValidationError("no room in (M, L-2) for the generator bump")
    radius = width / 6.0
    center = room_lo + radius
    max_shift = width - 2.0 * radius

    shifts = []
    for t in shift_list:
        t = float(t)
        cells = t / h
        if abs(cells - round(cells)) > 1e-9:
            raise ValidationError(f"shift {t} is not a grid multiple")
        if not (0.0 <= t <= max_shift + 1e-12):
            raise ValidationError(
                f"shift {t} leaves the room (max {max_shift:.6g})"
            )
        shifts.append(round(cells) * h)

    t_rel = (x - center) / radius
    core = np.abs(t_rel) < 1.0
    psi = np.zeros(grid.shape)
    psi[core] = np.exp(-1.0 / (1.0 - t_rel[core] ** 2))
    w = np.zeros(grid.shape)
    w[core] = psi[core] * (-2.0 * t_rel[core] / (1.0 - t_rel[core] ** 2) ** 2) / radius

    table = table_for(grid, float(s) if not hasattr(s, "s") else s.s)
    mult = table.grad_multipliers[0]
    xi = 2.0 * np.pi * np.fft.fftfreq(grid.points_per_axis, d=h)
    w_hat = np.fft.fft(w)
    live = mult != 0.0
    base = np.zeros_like(w_hat)
    base[live] = w_hat[live] / mult[live]

    fields = []
    for t in shifts:
        spec = np.exp(-1j * t * xi) * base
        vals = np.fft.ifft(spec)
        if np.linalg.norm(vals.imag) > RESIDUE_TOL * max(1.0, np.linalg.norm(vals.real)):
            raise ValidationError("kernel inversion produced a complex field")
        fields.append(ScalarField(grid, np.ascontiguousarray(vals.real)))
    return fields
