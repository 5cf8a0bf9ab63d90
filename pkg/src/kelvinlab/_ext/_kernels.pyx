# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False, language_level=3
"""Compiled pair-sum kernels for |x - y|^power with optional cap."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, log, fmin

cnp.import_array()

# which closed form evaluates r2^(power/2)
cdef enum Shape:
    GENERAL, INV_SQRT, INV_QUARTER, INV, SQRT, SQUARE, INV_THREE_HALVES


cdef Shape _shape(double half):
    if half == -0.5:
        return INV_SQRT
    if half == -0.25:
        return INV_QUARTER
    if half == -1.0:
        return INV
    if half == -1.5:
        return INV_THREE_HALVES
    if half == 0.5:
        return SQRT
    if half == 1.0:
        return SQUARE
    return GENERAL


cdef inline double _radial(double r2, double half, Shape shape) nogil:
    if shape == INV_SQRT:
        return 1.0 / sqrt(r2)
    if shape == INV_QUARTER:
        return 1.0 / sqrt(sqrt(r2))
    if shape == INV:
        return 1.0 / r2
    if shape == INV_THREE_HALVES:
        return 1.0 / (r2 * sqrt(r2))
    if shape == SQRT:
        return sqrt(r2)
    if shape == SQUARE:
        return r2
    return exp(half * log(r2))


def kernel_matrix(double[:, ::1] targets, double[:, ::1] sources, double power,
                  double cap, double coincident):
    cdef Py_ssize_t m = targets.shape[0], k = sources.shape[0], n = targets.shape[1]
    cdef Py_ssize_t i, j, d
    cdef double r2, t, half = 0.5 * power
    cdef Shape shape = _shape(half)
    out = np.empty((m, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(m):
            for j in range(k):
                r2 = 0.0
                for d in range(n):
                    t = targets[i, d] - sources[j, d]
                    r2 = r2 + t * t
                if r2 == 0.0:
                    o[i, j] = coincident
                else:
                    o[i, j] = fmin(_radial(r2, half, shape), cap)
    return out


def kernel_sum(double[:, ::1] targets, double[:, ::1] sources, double[::1] weights,
               double power, double cap, double coincident):
    cdef Py_ssize_t m = targets.shape[0], k = sources.shape[0], n = targets.shape[1]
    cdef Py_ssize_t i, j, d
    cdef double r2, t, acc, half = 0.5 * power
    cdef Shape shape = _shape(half)
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(m):
            acc = 0.0
            for j in range(k):
                r2 = 0.0
                for d in range(n):
                    t = targets[i, d] - sources[j, d]
                    r2 = r2 + t * t
                if r2 == 0.0:
                    acc = acc + weights[j] * coincident
                else:
                    acc = acc + weights[j] * fmin(_radial(r2, half, shape), cap)
            o[i] = acc
    return out
