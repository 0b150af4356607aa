"""Periodic lattice, masks, fields and coefficient data.

Everything downstream works on a uniform cell-centered grid over the
periodic box [-L, L)^d with d in {1, 2}.  Cell centers sit at
x_i = -L + (i + 1/2) h with h = 2L/N, so no grid point lies on the box
boundary and reflection x -> -x maps the grid onto itself.

All container types are immutable: the wrapped numpy arrays are copied on
construction and marked read-only.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

HEADER_MAGIC = b"FRQH"
HEADER_VERSION = 1
_HEADER_FMT = "<4s3IdI4x"  # magic, version, dim, N, L, ncomp, pad to 32 bytes
HEADER_SIZE = struct.calcsize(_HEADER_FMT)
assert HEADER_SIZE == 32


class ValidationError(ValueError):
    """Raised when input data violates a documented precondition."""


class GridMismatchError(ValidationError):
    """Raised when two objects living on different grids are combined."""


def _readonly(values, dtype=float):
    out = np.array(values, dtype=dtype, order="C", copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered lattice on the periodic box [-L, L)^d."""

    dim: int
    half_width: float
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValidationError(f"dim must be 1 or 2, got {self.dim}")
        if self.half_width <= 0 or not np.isfinite(self.half_width):
            raise ValidationError(f"half_width must be positive, got {self.half_width}")
        n = self.points_per_axis
        if n < 8 or n % 2 != 0:
            raise ValidationError(f"points_per_axis must be even and >= 8, got {n}")

    @property
    def spacing(self):
        return 2.0 * self.half_width / self.points_per_axis

    @property
    def shape(self):
        return (self.points_per_axis,) * self.dim

    @property
    def n_points(self):
        return self.points_per_axis**self.dim

    @property
    def cell_volume(self):
        return self.spacing**self.dim

    def axis(self):
        """Cell-center coordinates along one axis."""
        n = self.points_per_axis
        return -self.half_width + (np.arange(n) + 0.5) * self.spacing

    def mesh(self):
        """Tuple of d coordinate arrays, each shaped like the grid."""
        x = self.axis()
        if self.dim == 1:
            return (x,)
        return tuple(np.meshgrid(x, x, indexing="ij"))


def build_grid(dim, half_width, points_per_axis):
    return Grid(dim=dim, half_width=float(half_width), points_per_axis=int(points_per_axis))


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatchError(f"grid mismatch: {a.grid} vs {b.grid}")


def _check_finite(values, what):
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{what} contains non-finite entries")


@dataclass(frozen=True)
class ScalarField:
    """Real scalar samples at the cell centers of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = _readonly(self.values)
        if values.shape != self.grid.shape:
            raise ValidationError(
                f"scalar field shape {values.shape} does not match grid shape {self.grid.shape}"
            )
        _check_finite(values, "scalar field")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class VectorField:
    """Real d-component samples; values[j] is the j-th component field."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = _readonly(self.values)
        expected = (self.grid.dim,) + self.grid.shape
        if values.shape != expected:
            raise ValidationError(
                f"vector field shape {values.shape} does not match {expected}"
            )
        _check_finite(values, "vector field")
        object.__setattr__(self, "values", values)


def field_from_function(grid, fn):
    """Sample a callable at the cell centers.

    fn is called with the d coordinate arrays and must broadcast; use it for
    smooth closed-form fields.
    """
    values = np.asarray(fn(*grid.mesh()), dtype=float)
    values = np.broadcast_to(values, grid.shape)
    return ScalarField(grid, values)


def zeros_field(grid):
    return ScalarField(grid, np.zeros(grid.shape))


@dataclass(frozen=True)
class OmegaMask:
    """Open subregion of the box, stored as an inside indicator on cells.

    margin is the distance from the region to the box boundary; every
    constructor rejects margin <= 2h so nonlocal tails have room before the
    periodic wrap.
    """

    grid: Grid
    inside: np.ndarray
    margin: float

    def __post_init__(self):
        inside = _readonly(self.inside, dtype=bool)
        if inside.shape != self.grid.shape:
            raise ValidationError("mask shape does not match grid shape")
        if not inside.any():
            raise ValidationError("mask has no inside cells")
        if self.margin <= 2.0 * self.grid.spacing:
            raise ValidationError(
                f"mask margin {self.margin:.6g} must exceed 2h = {2 * self.grid.spacing:.6g}"
            )
        object.__setattr__(self, "inside", inside)

    @property
    def n_inside(self):
        return int(self.inside.sum())

    def pack(self, field):
        """Inside values of a scalar field as a flat vector."""
        _check_same_grid(field, self)
        return field.values[self.inside]

    def complement(self):
        return ~self.inside


def interval_mask(grid, a, b):
    """Omega = (a, b) on a 1d grid."""
    if grid.dim != 1:
        raise ValidationError("interval_mask needs a 1d grid")
    if not (-grid.half_width < a < b < grid.half_width):
        raise ValidationError(f"interval ({a}, {b}) not inside (-L, L)")
    margin = min(a + grid.half_width, grid.half_width - b)
    x = grid.axis()
    return OmegaMask(grid, (x > a) & (x < b), margin)


def ball_mask(grid, center, radius):
    """Omega = open ball around center."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if center.shape != (grid.dim,):
        raise ValidationError(f"center must have {grid.dim} components")
    if radius <= 0:
        raise ValidationError("radius must be positive")
    # distance from the ball to the nearest box face, per axis
    margin = min(
        min(grid.half_width - c - radius, c - radius + grid.half_width)
        for c in center
    )
    mesh = grid.mesh()
    r2 = sum((m - c) ** 2 for m, c in zip(mesh, center))
    return OmegaMask(grid, r2 < radius**2, margin)


def restrict_to_mask(fld, mask):
    """Zero a field outside the mask.  Idempotent."""
    _check_same_grid(fld, mask)
    if isinstance(fld, VectorField):
        return VectorField(fld.grid, fld.values * mask.inside)
    return ScalarField(fld.grid, fld.values * mask.inside)


def extend_by_zero(inside_values, mask):
    """Embed a packed inside-vector into the full box as a scalar field."""
    inside_values = np.asarray(inside_values, dtype=float)
    if inside_values.shape != (mask.n_inside,):
        raise ValidationError(
            f"expected {mask.n_inside} inside values, got shape {inside_values.shape}"
        )
    out = np.zeros(mask.grid.shape)
    out[mask.inside] = inside_values
    return ScalarField(mask.grid, out)


def inner(u, v):
    """L2 inner product h^d sum(u v); vector fields sum over components."""
    _check_same_grid(u, v)
    if type(u) is not type(v):
        raise ValidationError("cannot pair scalar and vector fields")
    return float(u.grid.cell_volume * np.vdot(u.values, v.values).real)


def norm(u):
    return float(np.sqrt(u.grid.cell_volume) * np.linalg.norm(u.values))


@dataclass(frozen=True)
class Coefficient:
    """Matrix-valued coefficient A(x) with its ellipticity box (alpha, beta).

    matrix has shape (d, d) + grid.shape.  alpha and beta are the declared
    class bounds: A xi . xi >= alpha |xi|^2 and A xi . xi >= |A xi|^2 / beta.
    Construction does not verify the bounds; validate_coefficient does.
    """

    grid: Grid
    matrix: np.ndarray
    alpha: float
    beta: float

    def __post_init__(self):
        matrix = _readonly(self.matrix)
        d = self.grid.dim
        expected = (d, d) + self.grid.shape
        if matrix.shape != expected:
            raise ValidationError(f"coefficient shape {matrix.shape}, expected {expected}")
        _check_finite(matrix, "coefficient")
        if not (0 < self.alpha <= self.beta):
            raise ValidationError(f"need 0 < alpha <= beta, got ({self.alpha}, {self.beta})")
        object.__setattr__(self, "matrix", matrix)

    @property
    def is_symmetric(self):
        if self.grid.dim == 1:
            return True
        return bool(np.allclose(self.matrix[0, 1], self.matrix[1, 0], atol=1e-14))

    def transpose(self):
        return Coefficient(self.grid, np.swapaxes(self.matrix, 0, 1), self.alpha, self.beta)

    def apply(self, vec_values):
        """Pointwise matrix product A(x) g(x) on raw (d, ...) component data."""
        return np.einsum("ij...,j...->i...", self.matrix, vec_values)

    def apply_inverse(self, vec_values):
        """Pointwise solve A(x)^{-1} g(x)."""
        d = self.grid.dim
        if d == 1:
            return vec_values / self.matrix[0, 0]
        a, b = self.matrix[0, 0], self.matrix[0, 1]
        c, e = self.matrix[1, 0], self.matrix[1, 1]
        det = a * e - b * c
        out = np.empty_like(vec_values)
        out[0] = (e * vec_values[0] - b * vec_values[1]) / det
        out[1] = (-c * vec_values[0] + a * vec_values[1]) / det
        return out


def identity_coefficient(grid, scale=1.0, alpha=None, beta=None):
    """scale * I with the tight class bounds unless overridden."""
    d = grid.dim
    m = np.zeros((d, d) + grid.shape)
    for j in range(d):
        m[j, j] = scale
    return Coefficient(grid, m, alpha if alpha is not None else scale,
                       beta if beta is not None else scale)


def scalar_coefficient(grid, values, alpha, beta):
    """Coefficient a(x) I from a scalar sample array (fast path)."""
    values = np.broadcast_to(np.asarray(values, dtype=float), grid.shape)
    d = grid.dim
    m = np.zeros((d, d) + grid.shape)
    for j in range(d):
        m[j, j] = values
    return Coefficient(grid, m, alpha, beta)


def coefficient_from_function(grid, fn, alpha, beta):
    """Sample fn at cell centers.  fn(x) (or fn(x, y)) may return a scalar
    or a (d, d) matrix; scalars mean a(x) I."""
    mesh = grid.mesh()
    d = grid.dim
    probe = np.asarray(fn(*(m.flat[0] for m in mesh)), dtype=float)
    if probe.shape == ():
        try:
            values = np.asarray(fn(*mesh), dtype=float)
            if values.shape == grid.shape:
                return scalar_coefficient(grid, values, alpha, beta)
        except Exception:
            pass
        values = np.empty(grid.shape)
        for idx in np.ndindex(grid.shape):
            values[idx] = fn(*(m[idx] for m in mesh))
        return scalar_coefficient(grid, values, alpha, beta)
    if probe.shape != (d, d):
        raise ValidationError(f"fn must return a scalar or ({d}, {d}) matrix")
    matrix = np.empty((d, d) + grid.shape)
    for idx in np.ndindex(grid.shape):
        matrix[(slice(None), slice(None)) + idx] = fn(*(m[idx] for m in mesh))
    return Coefficient(grid, matrix, alpha, beta)


@dataclass(frozen=True)
class CoefficientReport:
    valid: bool
    lower_margin: float      # min over x of lambda_min(sym A) - alpha
    inverse_margin: float    # min over x, |xi|=1 of (A xi . xi - |A xi|^2 / beta)
    alpha: float
    beta: float
    worst_lower_index: tuple
    worst_inverse_index: tuple


def _sym_eig_min_2x2(p, q, r):
    # lambda_min of [[p, q], [q, r]] pointwise
    half_tr = 0.5 * (p + r)
    rad = np.sqrt((0.5 * (p - r)) ** 2 + q * q)
    return half_tr - rad


def validate_coefficient(coeff):
    """Check the two class bounds pointwise and report worst-case margins.

    The inverse-bound form q(xi) = A xi . xi - |A xi|^2 / beta is a quadratic
    form with matrix sym(A) - A^T A / beta; its exact minimum over unit xi is
    the smallest eigenvalue, which a direction sample that includes the
    eigen-directions also attains, so the margin is computed in closed form.
    """
    m = coeff.matrix
    if coeff.grid.dim == 1:
        a = m[0, 0]
        lower = a - coeff.alpha
        inv = a - a * a / coeff.beta
    else:
        sym_off = 0.5 * (m[0, 1] + m[1, 0])
        lower = _sym_eig_min_2x2(m[0, 0], sym_off, m[1, 1]) - coeff.alpha
        # M = sym(A) - A^T A / beta
        ata00 = m[0, 0] ** 2 + m[1, 0] ** 2
        ata01 = m[0, 0] * m[0, 1] + m[1, 0] * m[1, 1]
        ata11 = m[0, 1] ** 2 + m[1, 1] ** 2
        inv = _sym_eig_min_2x2(
            m[0, 0] - ata00 / coeff.beta,
            sym_off - ata01 / coeff.beta,
            m[1, 1] - ata11 / coeff.beta,
        )
    i_lower = np.unravel_index(int(np.argmin(lower)), coeff.grid.shape)
    i_inv = np.unravel_index(int(np.argmin(inv)), coeff.grid.shape)
    lo = float(lower.min())
    iv = float(inv.min())
    return CoefficientReport(
        valid=bool(lo >= 0 and iv >= 0),
        lower_margin=lo,
        inverse_margin=iv,
        alpha=coeff.alpha,
        beta=coeff.beta,
        worst_lower_index=i_lower,
        worst_inverse_index=i_inv,
    )


# ---------------------------------------------------------------------------
# serialization

def write_field(path, fld):
    """Binary format: 32-byte header, then float64 little-endian samples in
    row-major order (components outermost for vector fields)."""
    grid = fld.grid
    ncomp = 1 if isinstance(fld, ScalarField) else grid.dim
    header = struct.pack(
        _HEADER_FMT, HEADER_MAGIC, HEADER_VERSION, grid.dim,
        grid.points_per_axis, grid.half_width, ncomp,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(fld.values, dtype="<f8").tobytes())


def read_field(path):
    with open(path, "rb") as fh:
        header = fh.read(HEADER_SIZE)
        if len(header) < HEADER_SIZE:
            raise ValidationError(f"{path}: truncated header")
        magic, version, dim, n, half_width, ncomp = struct.unpack(_HEADER_FMT, header)
        if magic != HEADER_MAGIC:
            raise ValidationError(f"{path}: bad magic {magic!r}")
        if version != HEADER_VERSION:
            raise ValidationError(f"{path}: unsupported version {version}")
        grid = Grid(dim=dim, half_width=half_width, points_per_axis=n)
        count = ncomp * grid.n_points
        data = np.frombuffer(fh.read(count * 8), dtype="<f8")
        if data.size != count:
            raise ValidationError(f"{path}: truncated payload")
    if ncomp == 1:
        return ScalarField(grid, data.reshape(grid.shape))
    if ncomp != dim:
        raise ValidationError(f"{path}: ncomp {ncomp} not supported for dim {dim}")
    return VectorField(grid, data.reshape((ncomp,) + grid.shape))


def _fmt(x):
    return repr(float(x))


def write_field_csv(path, fld):
    """Rows index,x[,y],value with the flat row-major index."""
    grid = fld.grid
    if isinstance(fld, VectorField):
        raise ValidationError("CSV field format stores scalar fields only")
    mesh = grid.mesh()
    cols = ["index", "x", "value"] if grid.dim == 1 else ["index", "x", "y", "value"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        flat = fld.values.ravel()
        coords = [m.ravel() for m in mesh]
        for i in range(flat.size):
            w.writerow([i, *(_fmt(c[i]) for c in coords), _fmt(flat[i])])


def read_field_csv(path, grid):
    values = np.empty(grid.n_points)
    seen = 0
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[0] != "index" or header[-1] != "value":
            raise ValidationError(f"{path}: unexpected CSV header {header}")
        for row in r:
            values[int(row[0])] = float(row[-1])
            seen += 1
    if seen != grid.n_points:
        raise ValidationError(f"{path}: expected {grid.n_points} rows, got {seen}")
    return ScalarField(grid, values.reshape(grid.shape))


def write_mask_csv(path, mask):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "inside"])
        for i, v in enumerate(mask.inside.ravel()):
            w.writerow([i, int(v)])


def read_mask_csv(path, grid, margin):
    inside = np.zeros(grid.n_points, dtype=bool)
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        for row in r:
            inside[int(row[0])] = bool(int(row[1]))
    return OmegaMask(grid, inside.reshape(grid.shape), margin)
