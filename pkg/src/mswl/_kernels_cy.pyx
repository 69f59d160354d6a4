# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Cython twins of the stepping kernels in mswl._kernels_py.

Same update rules, same boundary handling; the parity test in
tests/test_kernels.py holds the two implementations together.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def axisym_step(double[:, ::1] u_prev, double[:, ::1] u, double[:, ::1] pot,
                double[:, ::1] src, double[:, ::1] sigma, double dx,
                double dr, double dt, double[:, ::1] out):
    cdef Py_ssize_t nx = u.shape[0]
    cdef Py_ssize_t nr = u.shape[1]
    cdef double idx2 = 1.0 / (dx * dx)
    cdef double idr2 = 1.0 / (dr * dr)
    cdef double dt2 = dt * dt
    cdef Py_ssize_t i, j
    cdef double lap, half, num
    with nogil:
        for i in range(1, nx - 1):
            # regularized axis row
            lap = (u[i + 1, 0] - 2.0 * u[i, 0] + u[i - 1, 0]) * idx2 \
                + 4.0 * (u[i, 1] - u[i, 0]) * idr2
            half = 0.5 * dt * sigma[i, 0]
            num = 2.0 * u[i, 0] - (1.0 - half) * u_prev[i, 0] \
                + dt2 * (lap - pot[i, 0] * u[i, 0] + src[i, 0])
            out[i, 0] = num / (1.0 + half)
            for j in range(1, nr - 1):
                lap = (u[i + 1, j] - 2.0 * u[i, j] + u[i - 1, j]) * idx2 \
                    + (u[i, j + 1] - 2.0 * u[i, j] + u[i, j - 1]) * idr2 \
                    + (u[i, j + 1] - u[i, j - 1]) * (idr2 / (2.0 * j))
                half = 0.5 * dt * sigma[i, j]
                num = 2.0 * u[i, j] - (1.0 - half) * u_prev[i, j] \
                    + dt2 * (lap - pot[i, j] * u[i, j] + src[i, j])
                out[i, j] = num / (1.0 + half)
            out[i, nr - 1] = 0.0
        for j in range(nr):
            out[0, j] = 0.0
            out[nx - 1, j] = 0.0
    return np.asarray(out)


def cart1d_step(double[::1] u_prev, double[::1] u, double[::1] pot,
                double[::1] src, double[::1] sigma, double dx, double dt,
                double[::1] out):
    cdef Py_ssize_t nx = u.shape[0]
    cdef double idx2 = 1.0 / (dx * dx)
    cdef double dt2 = dt * dt
    cdef Py_ssize_t i
    cdef double lap, half, num
    with nogil:
        for i in range(1, nx - 1):
            lap = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * idx2
            half = 0.5 * dt * sigma[i]
            num = 2.0 * u[i] - (1.0 - half) * u_prev[i] \
                + dt2 * (lap - pot[i] * u[i] + src[i])
            out[i] = num / (1.0 + half)
        out[0] = 0.0
        out[nx - 1] = 0.0
    return np.asarray(out)


def uniform_table_eval(double[::1] ftab, double dr_tab, double gamma,
                       double xc, double[::1] x1, double[::1] rho,
                       double[:, ::1] out):
    cdef Py_ssize_t nx = x1.shape[0]
    cdef Py_ssize_t nr = rho.shape[0]
    cdef Py_ssize_t ntab = ftab.shape[0]
    cdef double inv = 1.0 / dr_tab
    cdef Py_ssize_t i, j, idx
    cdef double xs, r, pos, frac
    with nogil:
        for i in range(nx):
            xs = gamma * (x1[i] - xc)
            xs = xs * xs
            for j in range(nr):
                r = sqrt(xs + rho[j] * rho[j])
                pos = r * inv
                idx = <Py_ssize_t> pos
                if idx > ntab - 2:
                    idx = ntab - 2
                frac = pos - idx
                if frac > 1.0:
                    frac = 1.0
                out[i, j] = ftab[idx] * (1.0 - frac) + ftab[idx + 1] * frac
    return np.asarray(out)
