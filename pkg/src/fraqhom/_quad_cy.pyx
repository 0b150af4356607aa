# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled quadrature kernels.

Mirror of fraqhom._quad_py (same functions, same semantics); see that module
for the contracts.  Keep the two in sync.

The lattice is uniform, so every kernel value depends only on the integer
offset between cells; each entry point precomputes a power table over
offsets once and the hot loops reduce to gathers and multiply-adds.
"""

from libc.math cimport fabs, pow

import numpy as np


cdef void _offset_kernel_1d(double[::1] kt, double h, double expo):
    # kt[d] = (h d)^(-expo) for d >= 1; kt[0] unused and zeroed
    cdef Py_ssize_t d
    kt[0] = 0.0
    for d in range(1, kt.shape[0]):
        kt[d] = pow(h * d, -expo)


def quad_sums_1d(const double[::1] u, const double[::1] x, double h, double s,
                 const long[::1] idx, const long[::1] m):
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t N = x.shape[0]
    S_arr = np.empty(n)
    W_arr = np.empty(n)
    cdef double[::1] S = S_arr
    cdef double[::1] W = W_arr
    kt_arr = np.empty(N)
    wc_arr = np.empty(N)
    cdef double[::1] kt = kt_arr
    cdef double[::1] wc = wc_arr
    cdef Py_ssize_t k, j, d, i0, mk
    cdef double u0, acc
    _offset_kernel_1d(kt, h, 1.0 + s)
    # wc[d] = h * sum over the symmetric window of radius d of |z|^(-s)
    wc[0] = 0.0
    for d in range(1, N):
        wc[d] = wc[d - 1] + 2.0 * h * pow(h * d, -s)
    for k in range(n):
        i0 = idx[k]
        mk = m[k]
        u0 = u[i0]
        acc = 0.0
        for j in range(i0):
            acc += (u0 - u[j]) * kt[i0 - j]
        for j in range(i0 + 1, N):
            acc -= (u0 - u[j]) * kt[j - i0]
        S[k] = h * acc
        W[k] = wc[mk]
    return S_arr, W_arr


def quad_sums_2d(const double[:, ::1] u, const double[::1] x, double h, double s,
                 const long[::1] idx0, const long[::1] idx1, const long[::1] m):
    cdef Py_ssize_t n = idx0.shape[0]
    cdef Py_ssize_t N = x.shape[0]
    S_arr = np.empty((n, 2))
    W_arr = np.empty((n, 3))
    cdef double[:, ::1] S = S_arr
    cdef double[:, ::1] W = W_arr
    kern2_arr = np.empty((N, N))
    cdef double[:, ::1] kern2 = kern2_arr
    cdef Py_ssize_t k, i0, j0, i, j, ai, aj, mk
    cdef double u0, du, kern, cell, di, dj
    cdef double s0, s1, w00, w01, w11
    cdef double expo = (3.0 + s) / 2.0
    cell = h * h
    # kern2[a, b] = (h^2 (a^2 + b^2))^(-(3+s)/2); center entry zeroed
    for ai in range(N):
        for aj in range(N):
            if ai == 0 and aj == 0:
                kern2[0, 0] = 0.0
            else:
                kern2[ai, aj] = pow(h * h * (ai * ai + aj * aj), -expo)
    for k in range(n):
        i0 = idx0[k]
        j0 = idx1[k]
        mk = m[k]
        u0 = u[i0, j0]
        s0 = 0.0
        s1 = 0.0
        for i in range(N):
            ai = i0 - i if i0 >= i else i - i0
            di = h * (i0 - i)
            for j in range(N):
                aj = j0 - j if j0 >= j else j - j0
                kern = kern2[ai, aj]
                du = u0 - u[i, j]
                s0 += du * di * kern
                s1 += du * (h * (j0 - j)) * kern
        S[k, 0] = cell * s0
        S[k, 1] = cell * s1
        w00 = 0.0
        w01 = 0.0
        w11 = 0.0
        for i in range(i0 - mk, i0 + mk + 1):
            ai = i0 - i if i0 >= i else i - i0
            di = h * (i0 - i)
            for j in range(j0 - mk, j0 + mk + 1):
                aj = j0 - j if j0 >= j else j - j0
                kern = kern2[ai, aj]
                dj = h * (j0 - j)
                w00 += di * di * kern
                w01 += di * dj * kern
                w11 += dj * dj * kern
        W[k, 0] = cell * w00
        W[k, 1] = cell * w01
        W[k, 2] = cell * w11
    return S_arr, W_arr


def leibniz_sum_1d(const double[::1] phi, const double[::1] u, const double[::1] x,
                   double h, double s):
    cdef Py_ssize_t N = x.shape[0]
    out_arr = np.empty(N)
    cdef double[::1] out = out_arr
    kt_arr = np.empty(N)
    cdef double[::1] kt = kt_arr
    cdef Py_ssize_t i, j
    cdef double pi_, ui, acc
    _offset_kernel_1d(kt, h, 1.0 + s)
    for i in range(N):
        pi_ = phi[i]
        ui = u[i]
        acc = 0.0
        for j in range(i):
            acc += (pi_ - phi[j]) * (ui - u[j]) * kt[i - j]
        for j in range(i + 1, N):
            acc -= (pi_ - phi[j]) * (ui - u[j]) * kt[j - i]
        out[i] = h * acc
    return out_arr


def leibniz_sum_2d(const double[:, ::1] phi, const double[:, ::1] u, const double[::1] x,
                   double h, double s):
    cdef Py_ssize_t N = x.shape[0]
    out_arr = np.empty((2, N, N))
    cdef double[:, :, ::1] out = out_arr
    kern2_arr = np.empty((N, N))
    cdef double[:, ::1] kern2 = kern2_arr
    cdef Py_ssize_t i, j, k, l, ai, aj
    cdef double p0, u0, kern, w, acc0, acc1, cell, dz0
    cdef double expo = (3.0 + s) / 2.0
    cell = h * h
    for ai in range(N):
        for aj in range(N):
            if ai == 0 and aj == 0:
                kern2[0, 0] = 0.0
            else:
                kern2[ai, aj] = pow(h * h * (ai * ai + aj * aj), -expo)
    for i in range(N):
        for j in range(N):
            p0 = phi[i, j]
            u0 = u[i, j]
            acc0 = 0.0
            acc1 = 0.0
            for k in range(N):
                ai = i - k if i >= k else k - i
                dz0 = h * (i - k)
                for l in range(N):
                    aj = j - l if j >= l else l - j
                    kern = kern2[ai, aj]
                    w = (p0 - phi[k, l]) * (u0 - u[k, l]) * kern
                    acc0 += w * dz0
                    acc1 += w * (h * (j - l))
            out[0, i, j] = cell * acc0
            out[1, i, j] = cell * acc1
    return out_arr
