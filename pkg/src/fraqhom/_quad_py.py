"""Vectorized numpy quadrature kernels.

Fallback implementations of the singular lattice sums used by the direct
(quadrature) backend.  The compiled module fraqhom._quad_cy exports the same
four functions with identical semantics; fraqhom.fracops picks whichever is
importable.  Keep the two in sync.

All kernels integrate over box cells only and skip the singular cell; the
caller owns slope subtraction, window add-back and exterior-tail terms.
"""

import numpy as np


def quad_sums_1d(u, x, h, s, idx, m):
    """Plain kernel sums and window moments at selected 1d points.

    Returns (S, W) where, writing z = x[i0] - x[j],

        S[k] = h * sum_{j != i0} (u[i0] - u[j]) sign(z) |z|^(-(1+s))
        W[k] = h * sum_{0 < |j - i0| <= m[k]} |z|^(-s)
    """
    n = idx.shape[0]
    N = x.shape[0]
    S = np.empty(n)
    W = np.empty(n)
    j = np.arange(N)
    for k in range(n):
        i0 = int(idx[k])
        dz = x[i0] - x
        adz = np.abs(dz)
        adz[i0] = 1.0
        kern = np.sign(dz) * adz ** (-(1.0 + s))
        kern[i0] = 0.0
        S[k] = h * np.dot(u[i0] - u, kern)
        win = (np.abs(j - i0) <= int(m[k])) & (j != i0)
        W[k] = h * np.sum(adz[win] ** (-s))
    return S, W


def quad_sums_2d(u, x, h, s, idx0, idx1, m):
    """2d analogue of quad_sums_1d over square windows.

    Returns (S, W) with S shape (n, 2) and W shape (n, 3) holding the window
    moments (w00, w01, w11), where z = x_eval - y runs over cells:

        S[k, a] = h^2 * sum_{cell != eval} (u0 - u) z_a |z|^(-(3+s))
        W[k, *] = h^2 * sum_{window \ eval} z_a z_b |z|^(-(3+s))
    """
    n = idx0.shape[0]
    S = np.empty((n, 2))
    W = np.empty((n, 3))
    cell = h * h
    for k in range(n):
        i0, j0 = int(idx0[k]), int(idx1[k])
        dz0 = (x[i0] - x)[:, None]
        dz1 = (x[j0] - x)[None, :]
        r2 = dz0 * dz0 + dz1 * dz1
        r2[i0, j0] = 1.0
        kern = r2 ** (-(3.0 + s) / 2.0)
        kern[i0, j0] = 0.0
        du = u[i0, j0] - u
        S[k, 0] = cell * np.sum(du * dz0 * kern)
        S[k, 1] = cell * np.sum(du * dz1 * kern)
        mk = int(m[k])
        sl0 = slice(i0 - mk, i0 + mk + 1)
        sl1 = slice(j0 - mk, j0 + mk + 1)
        kw = kern[sl0, sl1]
        z0 = dz0[sl0]
        z1 = dz1[:, sl1]
        W[k, 0] = cell * np.sum(z0 * z0 * kw)
        W[k, 1] = cell * np.sum(z0 * z1 * kw)
        W[k, 2] = cell * np.sum(z1 * z1 * kw)
    return S, W


def leibniz_sum_1d(phi, u, x, h, s, chunk=512):
    """Lattice sum of the product-rule remainder kernel at every 1d point:

        out[i] = h * sum_{j != i} (phi_i - phi_j)(u_i - u_j) sign(z) |z|^(-(1+s))
    """
    N = x.shape[0]
    out = np.empty(N)
    for a in range(0, N, chunk):
        b = min(a + chunk, N)
        dz = x[a:b, None] - x[None, :]
        adz = np.abs(dz)
        sing = adz == 0.0
        adz[sing] = 1.0
        kern = np.sign(dz) * adz ** (-(1.0 + s))
        kern[sing] = 0.0
        dphi = phi[a:b, None] - phi[None, :]
        du = u[a:b, None] - u[None, :]
        out[a:b] = h * np.einsum("ij,ij,ij->i", dphi, du, kern)
    return out


def leibniz_sum_2d(phi, u, x, h, s):
    """2d remainder lattice sum; returns shape (2, N, N)."""
    N = x.shape[0]
    out = np.empty((2, N, N))
    cell = h * h
    colz = x[:, None]
    rowz = x[None, :]
    for i in range(N):
        dz0 = x[i] - colz
        for j in range(N):
            dz1 = x[j] - rowz
            r2 = dz0 * dz0 + dz1 * dz1
            r2[i, j] = 1.0
            kern = r2 ** (-(3.0 + s) / 2.0)
            kern[i, j] = 0.0
            w = (phi[i, j] - phi) * (u[i, j] - u) * kern
            out[0, i, j] = cell * np.sum(w * dz0)
            out[1, i, j] = cell * np.sum(w * dz1)
    return out
