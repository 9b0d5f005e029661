# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled resampling kernel; mirrors _reference.curve_gains_from_counts.

The accumulation order matches the numpy reference exactly (including the
explicit +0.0 adds for the opposite arm) so both backends return identical
floats.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def curve_gains_from_counts(counts, orders, treatment, outcome, ks):
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    orders = np.ascontiguousarray(np.atleast_2d(orders), dtype=np.int64)
    treatment = np.ascontiguousarray(treatment, dtype=np.int8)
    outcome = np.ascontiguousarray(outcome, dtype=np.float64)
    ks = np.ascontiguousarray(ks, dtype=np.int64)
    out = np.empty((counts.shape[0], orders.shape[0], ks.shape[0]), dtype=np.float64)
    _gains(counts, orders, treatment, outcome, ks, out)
    return out


cdef void _gains(const cnp.int64_t[:, ::1] counts,
                 const cnp.int64_t[:, ::1] orders,
                 const cnp.int8_t[::1] treatment,
                 const cnp.float64_t[::1] outcome,
                 const cnp.int64_t[::1] ks,
                 cnp.float64_t[:, :, ::1] out) noexcept:
    cdef Py_ssize_t n_resamples = counts.shape[0]
    cdef Py_ssize_t n_members = counts.shape[1]
    cdef Py_ssize_t n_models = orders.shape[0]
    cdef Py_ssize_t n_grid = ks.shape[0]
    cdef Py_ssize_t d, s, j, g
    cdef cnp.int64_t member, c, cum, cum_before, n_t, n_c, partial, k
    cdef double y, val, s_t, s_c, nt_k, nc_k, st_k, sc_k
    cdef bint treated
    cdef double nan = float("nan")

    for d in range(n_resamples):
        for s in range(n_models):
            g = 0
            cum = 0
            n_t = 0
            n_c = 0
            s_t = 0.0
            s_c = 0.0
            for j in range(n_members):
                if g >= n_grid:
                    break
                member = orders[s, j]
                c = counts[d, member]
                treated = treatment[member] == 1
                y = outcome[member]
                val = c * y
                cum_before = cum
                cum = cum + c
                while g < n_grid and ks[g] <= cum:
                    k = ks[g]
                    partial = k - cum_before
                    if treated:
                        nt_k = <double>(n_t + partial)
                        st_k = s_t + partial * y
                        nc_k = <double>n_c
                        sc_k = s_c + 0.0
                    else:
                        nt_k = <double>n_t
                        st_k = s_t + 0.0
                        nc_k = <double>(n_c + partial)
                        sc_k = s_c + partial * y
                    if nt_k == 0.0 or nc_k == 0.0:
                        out[d, s, g] = nan
                    else:
                        out[d, s, g] = (st_k / nt_k - sc_k / nc_k) * k
                    g += 1
                if treated:
                    n_t = n_t + c
                    s_t = s_t + val
                    s_c = s_c + 0.0
                else:
                    n_c = n_c + c
                    s_c = s_c + val
                    s_t = s_t + 0.0
            while g < n_grid:
                out[d, s, g] = nan
                g += 1
