# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled numerical kernels: B-spline evaluation and GARCH recursions.

Same API as ``fieldcast._kernels_py``; selected at import by
``fieldcast._backend`` when available.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

__all__ = ["bspline_design", "eta2_recursion", "argarch_simulate_core"]


cdef Py_ssize_t _find_span(const double[::1] knots, int p, Py_ssize_t n_basis, double x) noexcept nogil:
    # Binary search for the span with knots[s] <= x < knots[s+1]; the right
    # endpoint maps to the last nonempty span.
    cdef Py_ssize_t lo = p
    cdef Py_ssize_t hi = n_basis  # one past the last valid span index
    cdef Py_ssize_t mid
    if x >= knots[n_basis]:
        return n_basis - 1
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if x < knots[mid]:
            hi = mid
        else:
            lo = mid
    return lo


def bspline_design(knots, degree, x):
    """Evaluate the nonzero B-spline basis functions at each point.

    Returns ``(starts, values)`` where ``values[i]`` holds the degree+1
    supported basis values at ``x[i]`` and ``starts[i]`` is the index of the
    first of them.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=1] kn = np.ascontiguousarray(knots, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xs = np.ascontiguousarray(np.atleast_1d(x), dtype=np.float64)
    cdef int p = degree
    cdef Py_ssize_t n_basis = kn.shape[0] - p - 1
    cdef Py_ssize_t n = xs.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] starts = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] values = np.zeros((n, p + 1), dtype=np.float64)
    cdef const double[::1] kv = kn
    cdef double[:, ::1] vv = values
    cdef long long[::1] sv = starts
    cdef double[::1] xv = xs
    cdef Py_ssize_t i, span
    cdef int j, r
    cdef double saved, temp, denom, xi
    cdef double left[33]
    cdef double right[33]

    if p > 32:
        raise ValueError("degree too large for compiled kernel")
    with nogil:
        for i in range(n):
            xi = xv[i]
            span = _find_span(kv, p, n_basis, xi)
            sv[i] = span - p
            vv[i, 0] = 1.0
            for j in range(1, p + 1):
                left[j] = xi - kv[span + 1 - j]
                right[j] = kv[span + j] - xi
                saved = 0.0
                for r in range(j):
                    denom = right[r + 1] + left[j - r]
                    if denom != 0.0:
                        temp = vv[i, r] / denom
                    else:
                        temp = 0.0
                    vv[i, r] = saved + right[r + 1] * temp
                    saved = left[j - r] * temp
                vv[i, j] = saved
    return starts, values


def eta2_recursion(drive, gamma, eta1_sq):
    """Run eta2[t] = drive[t-1] + gamma*eta2[t-1] from eta2[0] = eta1_sq."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d = np.ascontiguousarray(drive, dtype=np.float64)
    cdef Py_ssize_t n = d.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n + 1, dtype=np.float64)
    cdef double[::1] ov = out
    cdef const double[::1] dv = d
    cdef double g = gamma
    cdef double prev = eta1_sq
    cdef Py_ssize_t t
    with nogil:
        ov[0] = prev
        for t in range(n):
            prev = dv[t] + g * prev
            ov[t + 1] = prev
    return out


def argarch_simulate_core(eps, psi, omega, alpha, gamma, eta1_sq, beta0):
    """Generate an AR(1)+GARCH(1,1) path from pre-drawn unit-scale shocks."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] e = np.ascontiguousarray(eps, dtype=np.float64)
    cdef Py_ssize_t n = e.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] beta = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] eta2 = np.empty(n, dtype=np.float64)
    cdef double[::1] bv = beta
    cdef double[::1] uv = u
    cdef double[::1] ev2 = eta2
    cdef const double[::1] ev = e
    cdef double ps = psi, om = omega, al = alpha, ga = gamma
    cdef double e2 = eta1_sq
    cdef double b = beta0
    cdef double ut
    cdef Py_ssize_t t
    with nogil:
        for t in range(n):
            ev2[t] = e2
            ut = sqrt(e2) * ev[t]
            uv[t] = ut
            b = ps * b + ut
            bv[t] = b
            e2 = om + al * ut * ut + ga * e2
    return beta, u, eta2
