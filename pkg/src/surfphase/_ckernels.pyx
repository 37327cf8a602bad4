# cython: language_level=3
"""Compiled stencil kernels; same contract as ``surfphase._pykernels``."""

import numpy as np

from libc.math cimport sqrt


cdef inline Py_ssize_t _up(Py_ssize_t i, Py_ssize_t n) noexcept nogil:
    return 0 if i == n - 1 else i + 1


cdef inline Py_ssize_t _dn(Py_ssize_t i, Py_ssize_t n) noexcept nogil:
    return n - 1 if i == 0 else i - 1


def laplacian(const double[:, ::1] v, double h):
    cdef Py_ssize_t n = v.shape[0], i, j, ip, im
    out = np.empty((n, n))
    cdef double[:, ::1] o = out
    cdef double s = 1.0 / (h * h)
    with nogil:
        for i in range(n):
            ip = _up(i, n)
            im = _dn(i, n)
            o[i, 0] = (v[ip, 0] + v[im, 0] + v[i, 1] + v[i, n - 1] - 4.0 * v[i, 0]) * s
            for j in range(1, n - 1):
                o[i, j] = (v[ip, j] + v[im, j] + v[i, j + 1] + v[i, j - 1] - 4.0 * v[i, j]) * s
            o[i, n - 1] = (v[ip, n - 1] + v[im, n - 1] + v[i, 0] + v[i, n - 2]
                           - 4.0 * v[i, n - 1]) * s
    return out


cdef void _sq_diffs(const double[:, ::1] phi, double h, double[:, ::1] sx,
                    double[:, ::1] sy) noexcept nogil:
    cdef Py_ssize_t n = phi.shape[0], i, j
    cdef double d
    for i in range(n):
        for j in range(n):
            d = (phi[_up(i, n), j] - phi[i, j]) / h
            sx[i, j] = d * d
            d = (phi[i, _up(j, n)] - phi[i, j]) / h
            sy[i, j] = d * d


def avg_grad_mag(const double[:, ::1] phi, double h, double delta):
    cdef Py_ssize_t n = phi.shape[0], i, j
    out = np.empty((n, n))
    sx_a = np.empty((n, n))
    sy_a = np.empty((n, n))
    cdef double[:, ::1] o = out
    cdef double[:, ::1] sx = sx_a
    cdef double[:, ::1] sy = sy_a
    cdef double d2 = delta * delta
    with nogil:
        _sq_diffs(phi, h, sx, sy)
        for i in range(n):
            for j in range(n):
                o[i, j] = sqrt(0.5 * (sx[i, j] + sx[_dn(i, n), j]
                                      + sy[i, j] + sy[i, _dn(j, n)]) + d2)
    return out


def weighted_div_grad_edges(const double[:, ::1] dx_w, const double[:, ::1] dy_w,
                            const double[:, ::1] v, double h):
    cdef Py_ssize_t n = v.shape[0], i, j
    fx_a = np.empty((n, n))
    fy_a = np.empty((n, n))
    out = np.empty((n, n))
    cdef double[:, ::1] fx = fx_a
    cdef double[:, ::1] fy = fy_a
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(n):
                fx[i, j] = dx_w[i, j] * (v[_up(i, n), j] - v[i, j]) / h
                fy[i, j] = dy_w[i, j] * (v[i, _up(j, n)] - v[i, j]) / h
        for i in range(n):
            for j in range(n):
                o[i, j] = (fx[i, j] - fx[_dn(i, n), j] + fy[i, j] - fy[i, _dn(j, n)]) / h
    return out


def coupling_div(const double[:, ::1] phi, const double[:, ::1] rho,
                 const double[:, ::1] nmag, double h):
    cdef Py_ssize_t n = phi.shape[0], i, j, ip, jp
    w_a = np.empty((n, n))
    fx_a = np.empty((n, n))
    fy_a = np.empty((n, n))
    out = np.empty((n, n))
    cdef double[:, ::1] w = w_a
    cdef double[:, ::1] fx = fx_a
    cdef double[:, ::1] fy = fy_a
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(n):
                w[i, j] = rho[i, j] / nmag[i, j]
        for i in range(n):
            ip = _up(i, n)
            for j in range(n):
                jp = _up(j, n)
                fx[i, j] = 0.5 * (w[i, j] + w[ip, j]) * (phi[ip, j] - phi[i, j]) / h
                fy[i, j] = 0.5 * (w[i, j] + w[i, jp]) * (phi[i, jp] - phi[i, j]) / h
        for i in range(n):
            for j in range(n):
                o[i, j] = (fx[i, j] - fx[_dn(i, n), j] + fy[i, j] - fy[i, _dn(j, n)]) / h
    return out


def coupling_lin(const double[:, ::1] phi, const double[:, ::1] rho,
                 const double[:, ::1] nmag, const double[:, ::1] u,
                 const double[:, ::1] v, double h):
    cdef Py_ssize_t n = phi.shape[0], i, j, ip, jp, im, jm
    px_a = np.empty((n, n))
    py_a = np.empty((n, n))
    w_a = np.empty((n, n))
    dw_a = np.empty((n, n))
    fx_a = np.empty((n, n))
    fy_a = np.empty((n, n))
    dc_out = np.empty((n, n))
    dn_out = np.empty((n, n))
    cdef double[:, ::1] px = px_a
    cdef double[:, ::1] py = py_a
    cdef double[:, ::1] w = w_a
    cdef double[:, ::1] dw = dw_a
    cdef double[:, ::1] fx = fx_a
    cdef double[:, ::1] fy = fy_a
    cdef double[:, ::1] dc = dc_out
    cdef double[:, ::1] dn = dn_out
    cdef double gx, gy, ux, uy, nn
    with nogil:
        for i in range(n):
            ip = _up(i, n)
            for j in range(n):
                jp = _up(j, n)
                px[i, j] = (phi[ip, j] - phi[i, j]) * (u[ip, j] - u[i, j]) / (h * h)
                py[i, j] = (phi[i, jp] - phi[i, j]) * (u[i, jp] - u[i, j]) / (h * h)
        for i in range(n):
            im = _dn(i, n)
            for j in range(n):
                jm = _dn(j, n)
                nn = nmag[i, j]
                dn[i, j] = 0.5 * (px[i, j] + px[im, j] + py[i, j] + py[i, jm]) / nn
                w[i, j] = rho[i, j] / nn
                dw[i, j] = v[i, j] / nn - rho[i, j] * dn[i, j] / (nn * nn)
        for i in range(n):
            ip = _up(i, n)
            for j in range(n):
                jp = _up(j, n)
                gx = (phi[ip, j] - phi[i, j]) / h
                gy = (phi[i, jp] - phi[i, j]) / h
                ux = (u[ip, j] - u[i, j]) / h
                uy = (u[i, jp] - u[i, j]) / h
                fx[i, j] = 0.5 * (dw[i, j] + dw[ip, j]) * gx + 0.5 * (w[i, j] + w[ip, j]) * ux
                fy[i, j] = 0.5 * (dw[i, j] + dw[i, jp]) * gy + 0.5 * (w[i, j] + w[i, jp]) * uy
        for i in range(n):
            for j in range(n):
                dc[i, j] = (fx[i, j] - fx[_dn(i, n), j] + fy[i, j] - fy[i, _dn(j, n)]) / h
    return dc_out, dn_out
