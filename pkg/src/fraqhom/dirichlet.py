"""Variational solver for -div_s(A grad_s u) = f with u = 0 outside Omega.

Nodal collocation-Galerkin: the unknowns are cell values inside Omega and
trigonometric interpolation supplies grad_s, so the restricted stiffness
K = E^T D^T A D E (E extend-by-zero, D spectral gradient) is applied
matrix-free in O(N log N) per matvec.  Symmetric coefficients go through
conjugate gradients, nonsymmetric coercive ones through restarted GMRES
with a normal-equations fallback.  Both are preconditioned by the inverse
fractional Laplacian restricted to the inside cells, which is symmetric
positive definite there and keeps iteration counts flat under refinement.
"""

import csv
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg, gmres

from .fracops import FracOrder, div_raw, grad_raw, table_for
from .lattice import (
    Coefficient,
    OmegaMask,
    ScalarField,
    ValidationError,
    VectorField,
    identity_coefficient,
    validate_coefficient,
)

DEFAULT_TOL = 1e-10
GMRES_RESTART = 50
# stagnation: residual reduction below 1% over this many iterations
STAGNATION_WINDOW = 100


class SolverError(RuntimeError):
    """Krylov iteration failed to reach the requested residual."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class _Stagnation(Exception):
    pass


def _as_order(s, dim):
    if isinstance(s, FracOrder):
        if s.dim != dim:
            raise ValidationError(f"order has dim {s.dim}, grid has dim {dim}")
        return s
    return FracOrder(float(s), dim)


@dataclass(frozen=True)
class DirichletProblem:
    """-div_s(A (grad_s u + v)) = f, u = 0 outside the mask.

    The right-hand side is either a plain field supported in Omega (rhs) or
    a flux representative g with f = div_s g (rhs_flux); exactly one of the
    two must be given.  The optional affine term v folds into the right-hand
    side as f + div_s(A v).
    """

    mask: OmegaMask
    coeff: Coefficient
    s: FracOrder
    rhs: ScalarField = None
    rhs_flux: VectorField = None
    affine_term: VectorField = None

    def __post_init__(self):
        grid = self.mask.grid
        object.__setattr__(self, "s", _as_order(self.s, grid.dim))
        if self.coeff.grid != grid:
            raise ValidationError("coefficient grid does not match the mask grid")
        if (self.rhs is None) == (self.rhs_flux is None):
            raise ValidationError("give exactly one of rhs and rhs_flux")
        if self.rhs is not None:
            if not isinstance(self.rhs, ScalarField) or self.rhs.grid != grid:
                raise ValidationError("rhs must be a scalar field on the mask grid")
            if np.any(self.rhs.values[~self.mask.inside] != 0.0):
                raise ValidationError("rhs must vanish outside the mask")
        else:
            if not isinstance(self.rhs_flux, VectorField) or self.rhs_flux.grid != grid:
                raise ValidationError("rhs_flux must be a vector field on the mask grid")
        if self.affine_term is not None:
            if not isinstance(self.affine_term, VectorField) or self.affine_term.grid != grid:
                raise ValidationError("affine_term must be a vector field on the mask grid")
        report = validate_coefficient(self.coeff)
        if not report.valid:
            raise ValidationError(
                "coefficient leaves the class: lower margin "
                f"{report.lower_margin:.3e}, inverse margin {report.inverse_margin:.3e}"
            )


@dataclass(frozen=True)
class DirichletSolution:
    u: ScalarField            # zero outside the mask exactly
    flux: VectorField         # A (grad_s u + v) on the full box
    energy: float             # <A grad_s u, grad_s u>
    residual: float           # relative l2 residual of the restricted system
    iterations: int


def energy(solution):
    return solution.energy


def flux(solution):
    return solution.flux


# ---------------------------------------------------------------------------
# matrix-free stiffness and preconditioner

def _stiffness_matvec(table, coeff, mask):
    inside = mask.inside
    shape = mask.grid.shape

    def matvec(x):
        full = np.zeros(shape)
        full[inside] = x
        g = grad_raw(table, full)
        return -div_raw(table, coeff.apply(g))[inside]

    return matvec


def _preconditioner_matvec(table, s, mask):
    # inverse of the s-Laplacian symbol; exact inverse of K only for A = I
    # on the whole box, but it is SPD on the inside space and flattens the
    # |xi|^(2s) growth that otherwise makes CG counts scale like N^s.
    lap = table.laplacian_multiplier(2.0 * s)
    with np.errstate(divide="ignore"):
        inv = np.where(lap > 0.0, 1.0 / lap, 0.0)
    inside = mask.inside
    shape = mask.grid.shape

    def matvec(x):
        full = np.zeros(shape)
        full[inside] = x
        return np.fft.ifftn(inv * np.fft.fftn(full)).real[inside]

    return matvec


def apply_stiffness(coeff, s, mask, u_inside):
    """K u for a packed inside-vector; K = E^T D^T A D E up to the h^d weight."""
    if coeff.grid != mask.grid:
        raise ValidationError("coefficient grid does not match the mask grid")
    order = _as_order(s, mask.grid.dim)
    u_inside = np.asarray(u_inside, dtype=float)
    if u_inside.shape != (mask.n_inside,):
        raise ValidationError(
            f"expected {mask.n_inside} inside values, got shape {u_inside.shape}"
        )
    table = table_for(mask.grid, order.s)
    return _stiffness_matvec(table, coeff, mask)(u_inside)


def _rhs_vector(problem, table):
    inside = problem.mask.inside
    if problem.rhs is not None:
        b = problem.rhs.values[inside].copy()
    else:
        b = div_raw(table, problem.rhs_flux.values)[inside]
    if problem.affine_term is not None:
        av = problem.coeff.apply(problem.affine_term.values)
        b += div_raw(table, av)[inside]
    return b


def _run_krylov(apply_k, apply_m, coeff_symmetric, b, tol, max_iter, table, coeff, mask):
    """Iterate to a true relative residual <= tol; returns (x, iterations).

    scipy's recursive residual can drift from the true one near 1e-10, so the
    inner solves are asked for tol/4 and the residual reported by `solve` is
    recomputed from scratch.
    """
    n = b.shape[0]
    bnorm = np.linalg.norm(b)
    linop = LinearOperator((n, n), matvec=apply_k, dtype=float)
    precond = LinearOperator((n, n), matvec=apply_m, dtype=float)
    count = [0]

    if coeff_symmetric:
        def tick(_xk):
            count[0] += 1

        x, info = cg(linop, b, rtol=0.25 * tol, atol=0.0, maxiter=max_iter,
                     M=precond, callback=tick)
        return x, count[0], info

    history = deque(maxlen=STAGNATION_WINDOW + 1)

    def watch(pr_norm):
        count[0] += 1
        history.append(pr_norm)
        if len(history) > STAGNATION_WINDOW and history[-1] > 0.99 * history[0]:
            raise _Stagnation

    stagnated = False
    try:
        x, info = gmres(linop, b, rtol=0.25 * tol, atol=0.0, restart=GMRES_RESTART,
                        maxiter=max(1, max_iter // GMRES_RESTART), M=precond,
                        callback=watch, callback_type="pr_norm")
    except _Stagnation:
        stagnated = True
        info = -1
    if not stagnated and info == 0:
        return x, count[0], info

    # normal equations: K^T is the stiffness of A^T, so K^T K is SPD and the
    # squared preconditioner keeps its conditioning comparable to K's
    apply_kt = _stiffness_matvec(table, coeff.transpose(), mask)

    def normal(v):
        return apply_kt(apply_k(v))

    def msq(v):
        return apply_m(apply_m(v))

    gram = LinearOperator((n, n), matvec=normal, dtype=float)
    precond2 = LinearOperator((n, n), matvec=msq, dtype=float)
    bt = apply_kt(b)

    def tick(_xk):
        count[0] += 1

    x, info = cg(gram, bt, rtol=0.25 * tol * bnorm / np.linalg.norm(bt),
                 atol=0.0, maxiter=max_iter, M=precond2, callback=tick)
    return x, count[0], info


def solve(problem, tol=DEFAULT_TOL, max_iter=None):
    """Solve the Dirichlet problem to a relative weak-form residual <= tol."""
    mask = problem.mask
    grid = mask.grid
    order = problem.s
    table = table_for(grid, order.s)
    if max_iter is None:
        max_iter = 10 * mask.n_inside

    b = _rhs_vector(problem, table)
    bnorm = np.linalg.norm(b)
    apply_k = _stiffness_matvec(table, problem.coeff, mask)

    if bnorm == 0.0:
        x = np.zeros(mask.n_inside)
        iterations = 0
        residual = 0.0
    else:
        apply_m = _preconditioner_matvec(table, order.s, mask)
        x, iterations, _ = _run_krylov(
            apply_k, apply_m, problem.coeff.is_symmetric, b, tol, max_iter,
            table, problem.coeff, mask,
        )
        residual = float(np.linalg.norm(apply_k(x) - b) / bnorm)
        if not np.isfinite(residual) or residual > tol:
            raise SolverError(
                f"no convergence after {iterations} iterations, "
                f"relative residual {residual:.3e} > {tol:g}",
                residual=residual, iterations=iterations,
            )

    full = np.zeros(grid.shape)
    full[mask.inside] = x
    grad_u = grad_raw(table, full)
    if problem.affine_term is not None:
        flux_vals = problem.coeff.apply(grad_u + problem.affine_term.values)
    else:
        flux_vals = problem.coeff.apply(grad_u)
    a_grad = problem.coeff.apply(grad_u) if problem.affine_term is not None else flux_vals
    energy_val = float(grid.cell_volume * np.sum(a_grad * grad_u))

    return DirichletSolution(
        u=ScalarField(grid, full),
        flux=VectorField(grid, flux_vals),
        energy=energy_val,
        residual=residual,
        iterations=int(iterations),
    )


# ---------------------------------------------------------------------------
# the H^-s(Omega) norm via the Riesz isometry

def hminus_norm(f, s, mask, tol=DEFAULT_TOL):
    """H^-s(Omega) norm: solve -div_s grad_s w = f and return ||grad_s w||_L2.

    Vector fields are measured componentwise and combined as the square root
    of the sum of squared component norms.  f must vanish outside the mask.
    """
    grid = mask.grid
    order = _as_order(s, grid.dim)
    if f.grid != grid:
        raise ValidationError("field grid does not match the mask grid")
    if isinstance(f, VectorField):
        total = 0.0
        for comp in f.values:
            total += hminus_norm(ScalarField(grid, comp), order, mask, tol=tol) ** 2
        return float(np.sqrt(total))

    if np.any(f.values[~mask.inside] != 0.0):
        raise ValidationError("hminus_norm needs a field supported in the mask")
    b = f.values[mask.inside]
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return 0.0

    table = table_for(grid, order.s)
    ident = identity_coefficient(grid)
    apply_k = _stiffness_matvec(table, ident, mask)
    apply_m = _preconditioner_matvec(table, order.s, mask)
    x, iterations, _ = _run_krylov(apply_k, apply_m, True, b, tol,
                                   10 * mask.n_inside, table, ident, mask)
    residual = float(np.linalg.norm(apply_k(x) - b) / bnorm)
    if not np.isfinite(residual) or residual > tol:
        raise SolverError(
            f"hminus_norm solve stalled at relative residual {residual:.3e}",
            residual=residual, iterations=iterations,
        )
    full = np.zeros(grid.shape)
    full[mask.inside] = x
    grad_w = grad_raw(table, full)
    return float(np.sqrt(grid.cell_volume * np.sum(grad_w * grad_w)))


def apriori_ratio(problem, solution, tol=DEFAULT_TOL):
    """alpha ||grad_s u|| / ||f||_{H^-s}; at most 1 up to discretization slack."""
    grid = problem.mask.grid
    table = table_for(grid, problem.s.s)
    b = _rhs_vector(problem, table)
    f_eff = np.zeros(grid.shape)
    f_eff[problem.mask.inside] = b
    fnorm = hminus_norm(ScalarField(grid, f_eff), problem.s, problem.mask, tol=tol)
    if fnorm == 0.0:
        return 0.0
    grad_u = grad_raw(table, solution.u.values)
    gnorm = float(np.sqrt(grid.cell_volume * np.sum(grad_u * grad_u)))
    return problem.coeff.alpha * gnorm / fnorm


def write_solution_summary(path, problem, solution, tol=DEFAULT_TOL):
    """One-row CSV: energy,residual,iterations,apriori_ratio."""
    ratio = apriori_ratio(problem, solution, tol=tol)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["energy", "residual", "iterations", "apriori_ratio"])
        w.writerow([repr(solution.energy), repr(solution.residual),
                    solution.iterations, repr(float(ratio))])
