# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.  Semantics match ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, fabs, NAN

cnp.import_array()


def psor_lines(double[:, ::1] sub, double[:, ::1] diag, double[:, ::1] sup,
               double[:, ::1] rhs, double[:, ::1] obstacle, double[:, ::1] V,
               double omega, double tol, Py_ssize_t max_iter):
    cdef Py_ssize_t n_lines = V.shape[0], n = V.shape[1]
    cdef Py_ssize_t line, i, it, worst_it = 0
    cdef double y, old, new, change, worst_res = 0.0
    cdef double[::1] inv = np.empty(n)
    cdef double *lo
    cdef double *up
    cdef double *b
    cdef double *ob
    cdef double *v
    with nogil:
        for line in range(n_lines):
            lo = &sub[line, 0]
            up = &sup[line, 0]
            b = &rhs[line, 0]
            ob = &obstacle[line, 0]
            v = &V[line, 0]
            for i in range(n):
                inv[i] = 1.0 / diag[line, i]
            change = 0.0
            it = 0
            while it < max_iter:
                change = 0.0
                for i in range(1, n - 1):
                    y = (b[i] - lo[i] * v[i - 1] - up[i] * v[i + 1]) * inv[i]
                    old = v[i]
                    new = old + omega * (y - old)
                    if new < ob[i]:
                        new = ob[i]
                    if fabs(new - old) > change:
                        change = fabs(new - old)
                    v[i] = new
                it += 1
                if change <= tol:
                    break
            if it > worst_it:
                worst_it = it
            if change > worst_res:
                worst_res = change
    return int(worst_it), float(worst_res)


def tridiag_lines(double[:, ::1] sub, double[:, ::1] diag, double[:, ::1] sup,
                  double[:, ::1] rhs):
    cdef Py_ssize_t n_lines = rhs.shape[0], n = rhs.shape[1]
    cdef Py_ssize_t line, j
    cdef double m
    out_arr = np.empty((n_lines, n))
    cdef double[:, ::1] out = out_arr
    cdef double[::1] c = np.empty(n)
    cdef double[::1] d = np.empty(n)
    with nogil:
        for line in range(n_lines):
            c[0] = sup[line, 0] / diag[line, 0]
            d[0] = rhs[line, 0] / diag[line, 0]
            for j in range(1, n):
                m = diag[line, j] - sub[line, j] * c[j - 1]
                c[j] = sup[line, j] / m
                d[j] = (rhs[line, j] - sub[line, j] * d[j - 1]) / m
            out[line, n - 1] = d[n - 1]
            for j in range(n - 2, -1, -1):
                out[line, j] = d[j] - c[j] * out[line, j + 1]
    return out_arr


def crr_put(double S0, double K, double r, double sigma, double T, Py_ssize_t n):
    cdef double dt = T / n
    cdef double a = sigma * sqrt(dt)
    cdef double u = exp(a), d = exp(-a)
    cdef double disc = exp(-r * dt)
    cdef double p = (exp(r * dt) - d) / (u - d)
    cdef double pu = disc * p, pd = disc * (1.0 - p)
    cdef Py_ssize_t j, k, je
    cdef double S, cont, intr, g, g0, g1, w, S_je, S_next

    V_arr = np.empty(n + 1)
    b_arr = np.full(n + 1, np.nan)
    g_arr = np.empty(n + 1)
    cdef double[::1] V = V_arr
    cdef double[::1] boundary = b_arr
    cdef double[::1] gap = g_arr
    with nogil:
        for j in range(n + 1):
            S = S0 * exp((2.0 * j - n) * a)
            V[j] = K - S if K > S else 0.0
        boundary[n] = K
        for k in range(n - 1, -1, -1):
            je = -1
            for j in range(k + 1):
                S = S0 * exp((2.0 * j - k) * a)
                cont = pd * V[j] + pu * V[j + 1]
                intr = K - S
                g = cont - intr
                gap[j] = g
                if g <= 0.0 and intr > 0.0:
                    V[j] = intr
                    je = j
                else:
                    V[j] = cont
            if je >= 0:
                S_je = S0 * exp((2.0 * je - k) * a)
                if je < k:
                    S_next = S0 * exp((2.0 * (je + 1) - k) * a)
                    g0 = gap[je]
                    g1 = gap[je + 1]
                    w = -g0 / (g1 - g0) if g1 != g0 else 0.0
                    boundary[k] = S_je + w * (S_next - S_je)
                else:
                    boundary[k] = S_je
    return float(V[0]), b_arr
