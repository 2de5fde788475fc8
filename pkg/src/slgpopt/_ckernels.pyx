# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_kernels_py``."""
import numpy as np

from libc.math cimport exp, log


def log_trapz_exp(const double[:, ::1] values, const double[::1] weights):
    cdef Py_ssize_t m = values.shape[0], g = values.shape[1]
    cdef Py_ssize_t i, k
    cdef double shift, total
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] res = out
    with nogil:
        for i in range(m):
            shift = values[i, 0]
            for k in range(1, g):
                if values[i, k] > shift:
                    shift = values[i, k]
            total = 0.0
            for k in range(g):
                total = total + weights[k] * exp(values[i, k] - shift)
            res[i] = shift + log(total)
    return out


def grid_quantiles(const double[:, ::1] densities, const double[::1] t_grid, double tau):
    cdef Py_ssize_t m = densities.shape[0], g = densities.shape[1]
    cdef Py_ssize_t i, k, hit
    cdef double total, lo, hi, span, acc
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] res = out
    cdf_arr = np.empty(g, dtype=np.float64)
    cdef double[::1] cdf = cdf_arr
    with nogil:
        for i in range(m):
            cdf[0] = 0.0
            acc = 0.0
            for k in range(1, g):
                acc = acc + 0.5 * (t_grid[k] - t_grid[k - 1]) * (densities[i, k] + densities[i, k - 1])
                cdf[k] = acc
            total = cdf[g - 1]
            hit = g - 1
            for k in range(1, g):
                if cdf[k] / total >= tau:
                    hit = k
                    break
            lo = cdf[hit - 1] / total
            hi = cdf[hit] / total
            span = hi - lo
            if span > 0:
                res[i] = t_grid[hit - 1] + (tau - lo) / span * (t_grid[hit] - t_grid[hit - 1])
            else:
                res[i] = t_grid[hit]
    return out


def weighted_quantile_min(const double[:, ::1] sorted_values, const Py_ssize_t[:, ::1] order,
                          const double[:, ::1] weights, double alpha, double tol=1e-12):
    cdef Py_ssize_t n_x = sorted_values.shape[0], n = sorted_values.shape[1]
    cdef Py_ssize_t n_sim = weights.shape[0]
    cdef Py_ssize_t s, x, j
    cdef double acc, best, val, target = alpha - tol
    out = np.empty(n_sim, dtype=np.float64)
    cdef double[::1] res = out
    with nogil:
        for s in range(n_sim):
            best = 1e308
            for x in range(n_x):
                acc = 0.0
                val = sorted_values[x, n - 1]
                for j in range(n):
                    acc = acc + weights[s, order[x, j]]
                    if acc >= target:
                        val = sorted_values[x, j]
                        break
                if val < best:
                    best = val
            res[s] = best
    return out
