"""Block decomposition of L2(R^d)^d along ran(grad_s restricted to Omega).

H0 is spanned by the fractional gradients of the nodal fields inside Omega,
orthonormalized with a rank cut; H1 is its orthogonal complement and never
materialized.  On top of the split sit the four parametrization maps
Psi00 = a00^-1, Psi10 = a10 a00^-1, Psi01 = a00^-1 a01 and the Schur
complement Psi11 = a11 - a10 a00^-1 a01, the membership test for the gamma
class, and probe-based convergence reports along coefficient sequences.

All vectors here are flat arrays of length d * N^d in plain l2; the h^d
volume weight cancels in every projector, block, and Rayleigh quotient, so
it is dropped throughout.
"""

import concurrent.futures
import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh, inv, lu_factor, lu_solve, null_space, svd

from .fracops import grad_raw, table_for
from .lattice import OmegaMask, ValidationError

RANK_TOL = 1e-10
MEMBERSHIP_PROBES = 64
POWER_ITERATIONS = 100
CONVERGENCE_PROBES = 16
_COLUMN_CHUNK = 64


def _order_s(s):
    return float(s) if not hasattr(s, "s") else float(s.s)


@dataclass(frozen=True)
class BlockDecomposition:
    mask: OmegaMask
    s: float
    basis: np.ndarray            # (d * N^d, r), orthonormal columns
    singular_values: np.ndarray  # all n_inside singular values, descending

    @property
    def rank(self):
        return self.basis.shape[1]

    @property
    def full_dim(self):
        return self.basis.shape[0]

    def project_h0(self, g):
        return self.basis @ (self.basis.T @ g)

    def project_h1(self, g):
        return g - self.project_h0(g)

    def rank_stability(self, tols=(1e-8, 1e-9, 1e-10, 1e-11, 1e-12)):
        top = self.singular_values[0]
        return {t: int(np.sum(self.singular_values > t * top)) for t in tols}


def build_decomposition(mask, s):
    """Orthonormal basis of the discretized ran(grad_s over Omega)."""
    if mask.n_inside < 4:
        raise ValidationError("decomposition needs at least 4 inside cells")
    grid = mask.grid
    table = table_for(grid, _order_s(s))
    flat_idx = np.flatnonzero(mask.inside.ravel())
    d = grid.dim
    cols = np.empty((d * grid.n_points, flat_idx.size))
    bump = np.zeros(grid.n_points)
    for j, k in enumerate(flat_idx):
        bump[k] = 1.0
        cols[:, j] = grad_raw(table, bump.reshape(grid.shape)).ravel()
        bump[k] = 0.0
    u, sing, _ = svd(cols, full_matrices=False)
    rank = int(np.sum(sing > RANK_TOL * sing[0]))
    if rank == 0:
        raise ValidationError("gradient range is degenerate on this mask")
    return BlockDecomposition(mask=mask, s=_order_s(s),
                              basis=np.ascontiguousarray(u[:, :rank]),
                              singular_values=sing)


class BlockOperator:
    """Pointwise multiplication by a coefficient, split along H0 + H1.

    a00 is materialized as a dense rank x rank block and LU-factored once;
    the off-blocks and a11 stay matrix-free.
    """

    def __init__(self, decomposition, coeff):
        if coeff.grid != decomposition.mask.grid:
            raise ValidationError("coefficient grid does not match the decomposition")
        self.decomposition = decomposition
        self.coeff = coeff
        self.grid = coeff.grid
        basis = decomposition.basis
        r = decomposition.rank
        a00 = np.empty((r, r))
        for lo in range(0, r, _COLUMN_CHUNK):
            hi = min(lo + _COLUMN_CHUNK, r)
            block = np.stack([self.apply_full(basis[:, j]) for j in range(lo, hi)], axis=1)
            a00[:, lo:hi] = basis.T @ block
        self.a00 = a00
        try:
            self._lu = lu_factor(a00)
        except Exception as exc:  # pragma: no cover - valid coefficients keep a00 SPD
            raise ValidationError(f"a00 is numerically singular: {exc}")

    def apply_full(self, g):
        shaped = g.reshape((self.grid.dim,) + self.grid.shape)
        return self.coeff.apply(shaped).ravel()

    def a00_solve(self, v):
        return lu_solve(self._lu, v)

    def a01(self, z):
        return self.decomposition.basis.T @ self.apply_full(z)

    def a10(self, v):
        return self.decomposition.project_h1(self.apply_full(self.decomposition.basis @ v))

    def a11(self, z):
        return self.decomposition.project_h1(self.apply_full(z))

    def psi00(self, v):
        return self.a00_solve(v)

    def psi10(self, v):
        return self.a10(self.a00_solve(v))

    def psi01(self, z):
        return self.a00_solve(self.a01(z))

    def psi11(self, z):
        return self.a11(z) - self.a10(self.a00_solve(self.a01(z)))


def psi_maps(coeff, decomposition):
    """The four parametrization maps as callables; H0 arguments are rank-
    coordinate vectors, H1 arguments full vectors with P0 z = 0."""
    op = BlockOperator(decomposition, coeff)
    return {"psi00": op.psi00, "psi10": op.psi10, "psi01": op.psi01,
            "psi11": op.psi11}


def canonical_gamma(alpha, beta):
    alpha = float(alpha)
    beta = float(beta)
    if alpha <= 0.0:
        raise ValidationError(f"gamma needs alpha > 0, got {alpha}")
    if beta < alpha:
        raise ValidationError(f"gamma needs beta >= alpha, got {beta} < {alpha}")
    return np.array([[alpha, beta / alpha], [beta / alpha, beta]])


@dataclass(frozen=True)
class MembershipReport:
    gamma: np.ndarray
    margins: dict        # condition name -> margin (>= 0 means satisfied)
    passed: bool
    probes: int


def _h1_probes(decomposition, rng, count):
    out = []
    for _ in range(count):
        g = rng.standard_normal(decomposition.full_dim)
        z = decomposition.project_h1(g)
        out.append(z / np.linalg.norm(z))
    return out


def _operator_norm(apply_fn, adjoint_fn, dim, rng):
    # power iteration on T^T T; fixed iteration count keeps it deterministic
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(POWER_ITERATIONS):
        w = adjoint_fn(apply_fn(v))
        lam = np.linalg.norm(w)
        if lam == 0.0:
            return 0.0
        v = w / lam
    return float(np.sqrt(lam))


def membership_check(coeff, decomposition, gamma, seed=0):
    """Margins for the six class conditions.

    The two a00 bounds use the dense block exactly; the off-block norms use
    power iteration and the two Schur-complement bounds use seeded random
    Rayleigh probes, so the report is deterministic but the H1-side minima
    are estimates from above.
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (2, 2) or np.any(gamma <= 0.0):
        raise ValidationError("gamma must be a positive 2x2 matrix")
    op = BlockOperator(decomposition, coeff)
    rng = np.random.default_rng(seed)

    sym = 0.5 * (op.a00 + op.a00.T)
    re_a00_min = float(eigh(sym, eigvals_only=True)[0])
    a00_inv = inv(op.a00)
    sym_inv = 0.5 * (a00_inv + a00_inv.T)
    re_a00_inv_min = float(eigh(sym_inv, eigvals_only=True)[0])

    # adjoints: Psi10^T z = a00^-T U^T A^T z, Psi01^T v = P1 A^T U a00^-T v
    norm10 = _operator_norm(
        op.psi10,
        lambda z: np.linalg.solve(op.a00.T, op.decomposition.basis.T @ _apply_transpose(op, z)),
        decomposition.rank, rng,
    )
    norm01 = _operator_norm(
        op.psi01,
        lambda v: op.decomposition.project_h1(
            _apply_transpose(op, op.decomposition.basis @ np.linalg.solve(op.a00.T, v))),
        decomposition.full_dim, rng,
    )

    zs = _h1_probes(decomposition, rng, MEMBERSHIP_PROBES)
    re11 = np.inf
    re11_inv = np.inf
    for z in zs:
        pz = op.psi11(z)
        re11 = min(re11, float(np.dot(z, pz)))
        npz = np.dot(pz, pz)
        if npz > 0.0:
            # Re <z, Psi11^-1 z> >= 1/g11 for all z is equivalent to
            # <Psi11 w, w> >= ||Psi11 w||^2 / g11 for all w
            re11_inv = min(re11_inv, float(np.dot(z, pz) / npz))

    margins = {
        "re_a00 >= g00": re_a00_min - gamma[0, 0],
        "re_a00_inv >= 1/g11": re_a00_inv_min - 1.0 / gamma[1, 1],
        "norm_psi10 <= g10": gamma[1, 0] - norm10,
        "norm_psi01 <= g01": gamma[0, 1] - norm01,
        "re_psi11 >= g00": re11 - gamma[0, 0],
        "re_psi11_inv >= 1/g11": re11_inv - 1.0 / gamma[1, 1],
    }
    passed = all(m >= -1e-8 for m in margins.values())
    return MembershipReport(gamma=gamma, margins=margins, passed=passed,
                            probes=MEMBERSHIP_PROBES)


def _apply_transpose(op, g):
    shaped = g.reshape((op.grid.dim,) + op.grid.shape)
    return op.coeff.transpose().apply(shaped).ravel()


# ---------------------------------------------------------------------------
# probe-based convergence along sequences

@dataclass(frozen=True)
class SchurProbeReport:
    n_values: tuple
    discrepancies: dict   # map name -> tuple per n (max over probe pairs)
    scales: dict          # map name -> reference pairing scale
    failures: tuple
    verdicts: dict
    probes: int


def _probe_pairs(decomposition, count, seed=0):
    # Probes must have spectral decay: pairings of white noise against the
    # n-th oscillation mode are flat in n, which hides weak-operator
    # convergence behind a noise floor.  Seeded random combinations of
    # low-frequency box modes keep the probes fixed and deterministic while
    # making the discrepancy decay observable.
    from .homog import box_mode_probes

    rng = np.random.default_rng(seed)
    grid = decomposition.mask.grid
    n_modes = max(count, 12)
    fields, _ = box_mode_probes(grid, n_modes)
    stack = np.stack([f.values.ravel() for f in fields], axis=1)
    smooth = stack @ rng.standard_normal((stack.shape[1], 2 * count))
    h0 = []
    h1 = []
    for k in range(count):
        v = decomposition.basis.T @ smooth[:, 2 * k]
        h0.append(v / np.linalg.norm(v))
        z = decomposition.project_h1(smooth[:, 2 * k + 1])
        h1.append(z / np.linalg.norm(z))
    return h0, h1


def _map_pairings(op, h0, h1):
    pair = {}
    pair["psi00"] = np.array([np.dot(w, op.psi00(v)) for v, w in zip(h0, reversed(h0))])
    pair["psi10"] = np.array([np.dot(w, op.psi10(v)) for v, w in zip(h0, h1)])
    pair["psi01"] = np.array([np.dot(w, op.psi01(z)) for z, w in zip(h1, h0)])
    pair["psi11"] = np.array([np.dot(w, op.psi11(z)) for z, w in zip(h1, reversed(h1))])
    # dual problem: p = Psi11(a) z for one fixed z, paired against every w
    p = op.psi11(h1[0])
    pair["dual"] = np.array([np.dot(w, p) for w in h1])
    return pair


def schur_convergence_probe(sequence, limit, decomposition, n_list, threads=1,
                            seed=0):
    """Weak-operator-topology probe discrepancies along a coefficient family.

    For seeded probe pairs the report tracks |<w, Psi_ij(A_n) v> -
    <w, Psi_ij(A) v>| per n for the four maps plus the dual-problem pairings.
    A map's verdict passes when the discrepancies are non-increasing over n.
    """
    n_list = [int(n) for n in n_list]
    h0, h1 = _probe_pairs(decomposition, CONVERGENCE_PROBES, seed=seed)
    op_star = BlockOperator(decomposition, limit)
    star = _map_pairings(op_star, h0, h1)
    scales = {name: float(np.max(np.abs(vals))) for name, vals in star.items()}

    def one_n(n):
        op_n = BlockOperator(decomposition, sequence.member(n))
        pairs = _map_pairings(op_n, h0, h1)
        return {name: float(np.max(np.abs(pairs[name] - star[name]))) for name in star}

    rows = {}
    failures = {}
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            futs = {pool.submit(one_n, n): n for n in n_list}
            for fut in concurrent.futures.as_completed(futs):
                n = futs[fut]
                try:
                    rows[n] = fut.result()
                except ValidationError as exc:
                    failures[n] = str(exc)
    else:
        for n in n_list:
            try:
                rows[n] = one_n(n)
            except ValidationError as exc:
                failures[n] = str(exc)

    discrepancies = {}
    verdicts = {}
    clean = not failures
    for name in star:
        col = tuple(rows[n][name] if n in rows else None for n in n_list)
        discrepancies[name] = col
        vals = [v for v in col if v is not None]
        # verdict: discrepancy decreases over n, read as non-increasing
        # consecutive steps with rounding slack
        decreasing = bool(clean and vals and all(
            vals[i + 1] <= vals[i] * (1.0 + 1e-12) for i in range(len(vals) - 1)))
        verdicts[name] = decreasing
    return SchurProbeReport(
        n_values=tuple(n_list), discrepancies=discrepancies, scales=scales,
        failures=tuple(failures.get(n) for n in n_list),
        verdicts=verdicts, probes=CONVERGENCE_PROBES,
    )


def write_probe_report_csv(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "map", "probe_id", "discrepancy"])
        for i, n in enumerate(report.n_values):
            for name in sorted(report.discrepancies):
                val = report.discrepancies[name][i]
                w.writerow([n, name, "max", "" if val is None else repr(val)])


# ---------------------------------------------------------------------------
# dense oracle (small grids only)

def dense_oracle_discrepancy(coeff, decomposition):
    """Max-abs deviation in (a^-1)_11^-1 = Psi11(a), computed densely.

    Only meant for grids small enough to invert the full multiplication
    operator (d * N^d up to a few hundred).
    """
    grid = coeff.grid
    dim_full = decomposition.full_dim
    if dim_full > 512:
        raise ValidationError("dense oracle is restricted to small grids")
    d = grid.dim
    n = grid.n_points
    full = np.zeros((dim_full, dim_full))
    for i in range(d):
        for j in range(d):
            full[i * n:(i + 1) * n, j * n:(j + 1) * n] = np.diag(
                coeff.matrix[i, j].ravel())
    q = null_space(decomposition.basis.T)
    ainv = inv(full)
    b11 = q.T @ ainv @ q
    lhs = inv(b11)
    op = BlockOperator(decomposition, coeff)
    rhs = np.stack([q.T @ op.psi11(q[:, k]) for k in range(q.shape[1])], axis=1)
    return float(np.max(np.abs(lhs - rhs)))
