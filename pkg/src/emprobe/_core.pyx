# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled update sweeps for the staggered-grid solver.

Mirrors _core_np; loops parallelize over the slowest axis.  Thread count
is capped through set_threads (driven by the ENCLOSURE_THREADS variable
read in the kernels front-end).
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange

cdef extern from *:
    """
    #ifdef _OPENMP
    #include <omp.h>
    #else
    static void omp_set_num_threads(int n) { (void)n; }
    static int omp_get_max_threads(void) { return 1; }
    #endif
    """
    void omp_set_num_threads(int n) nogil
    int omp_get_max_threads() nogil

COMPILED = True


def set_threads(n):
    omp_set_num_threads(int(n))


def max_threads():
    return omp_get_max_threads()


def update_h(double[:, :, ::1] ex, double[:, :, ::1] ey,
             double[:, :, ::1] ez, double[:, :, ::1] hx,
             double[:, :, ::1] hy, double[:, :, ::1] hz, double ch):
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t ax = hx.shape[0], ay = hx.shape[1], az = hx.shape[2]
    cdef Py_ssize_t bx = hy.shape[0], by = hy.shape[1], bz = hy.shape[2]
    cdef Py_ssize_t cx = hz.shape[0], cy = hz.shape[1], cz = hz.shape[2]
    with nogil:
        for i in prange(ax, schedule='static'):
            for j in range(ay):
                for k in range(az):
                    hx[i, j, k] = hx[i, j, k] - ch * (
                        (ez[i, j + 1, k] - ez[i, j, k])
                        - (ey[i, j, k + 1] - ey[i, j, k]))
        for i in prange(bx, schedule='static'):
            for j in range(by):
                for k in range(bz):
                    hy[i, j, k] = hy[i, j, k] - ch * (
                        (ex[i, j, k + 1] - ex[i, j, k])
                        - (ez[i + 1, j, k] - ez[i, j, k]))
        for i in prange(cx, schedule='static'):
            for j in range(cy):
                for k in range(cz):
                    hz[i, j, k] = hz[i, j, k] - ch * (
                        (ey[i + 1, j, k] - ey[i, j, k])
                        - (ex[i, j + 1, k] - ex[i, j, k]))


def update_e(double[:, :, ::1] ex, double[:, :, ::1] ey,
             double[:, :, ::1] ez, double[:, :, ::1] hx,
             double[:, :, ::1] hy, double[:, :, ::1] hz, double ce):
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t nx = ex.shape[0], ny = ey.shape[1], nz = ez.shape[2]
    with nogil:
        for i in prange(nx, schedule='static'):
            for j in range(1, ny):
                for k in range(1, nz):
                    ex[i, j, k] = ex[i, j, k] + ce * (
                        (hz[i, j, k] - hz[i, j - 1, k])
                        - (hy[i, j, k] - hy[i, j, k - 1]))
        for i in prange(1, nx, schedule='static'):
            for j in range(ny):
                for k in range(1, nz):
                    ey[i, j, k] = ey[i, j, k] + ce * (
                        (hx[i, j, k] - hx[i, j, k - 1])
                        - (hz[i, j, k] - hz[i - 1, j, k]))
        for i in prange(1, nx, schedule='static'):
            for j in range(1, ny):
                for k in range(nz):
                    ez[i, j, k] = ez[i, j, k] + ce * (
                        (hy[i, j, k] - hy[i - 1, j, k])
                        - (hx[i, j, k] - hx[i, j - 1, k]))


def inject(cnp.ndarray comp, cnp.ndarray idx, cnp.ndarray frac, double amp):
    cdef double[::1] flat = comp.reshape(-1)
    cdef long[::1] ii = idx
    cdef double[::1] ff = frac
    cdef Py_ssize_t n = ii.shape[0], m
    for m in range(n):
        flat[ii[m]] += amp * ff[m]


def zero_edges(cnp.ndarray comp, cnp.ndarray idx):
    cdef double[::1] flat = comp.reshape(-1)
    cdef long[::1] ii = idx
    cdef Py_ssize_t n = ii.shape[0], m
    for m in range(n):
        flat[ii[m]] = 0.0


def gather(cnp.ndarray comp, cnp.ndarray idx8, cnp.ndarray w8):
    return (comp.reshape(-1)[idx8] * w8).sum(axis=1)
