# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot loops in ``_kernels_py``.

Same algorithms and stopping rules; dense linear algebra goes through the
BLAS/LAPACK bundled with scipy.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt
from scipy.linalg.cython_blas cimport dsymv
from scipy.linalg.cython_lapack cimport dpotrf, dpotrs

cnp.import_array()

cdef double STEP_FRACTION = 0.99


cdef double _max_step(double[::1] x, double[::1] dx, double[::1] bnd, Py_ssize_t n) noexcept nogil:
    cdef double a = 1.0
    cdef double r
    cdef Py_ssize_t j
    for j in range(n):
        if bnd[j] > 0 and dx[j] < 0:
            r = -x[j] / dx[j]
            if r < a:
                a = r
    return a


cdef int _factor(double[:, ::1] H, double[:, ::1] L, Py_ssize_t n) noexcept nogil:
    """Cholesky of H into L (lower, column-major view of the symmetric array)."""
    cdef char uplo = b'U'
    cdef int nn = <int>n
    cdef int info = 0
    cdef Py_ssize_t i, j, attempt
    cdef double dmax = 1.0
    cdef double ridge
    for i in range(n):
        if fabs(H[i, i]) > dmax:
            dmax = fabs(H[i, i])
    ridge = 1e-14 * dmax
    for attempt in range(9):
        for i in range(n):
            for j in range(n):
                L[i, j] = H[i, j]
            if attempt > 0:
                L[i, i] += ridge
        # Row-major lower triangle == column-major upper triangle.
        dpotrf(&uplo, &nn, &L[0, 0], &nn, &info)
        if info == 0:
            return 0
        if attempt > 0:
            ridge *= 100.0
    return -1


cdef void _chol_solve(double[:, ::1] L, double[::1] b, Py_ssize_t n) noexcept nogil:
    cdef char uplo = b'U'
    cdef int nn = <int>n
    cdef int one = 1
    cdef int info = 0
    dpotrs(&uplo, &nn, &one, &L[0, 0], &nn, &b[0], &nn, &info)


cdef void _symv(double[:, ::1] Q, double[::1] x, double[::1] out, Py_ssize_t n) noexcept nogil:
    cdef char uplo = b'U'
    cdef int nn = <int>n
    cdef int inc = 1
    cdef double one = 1.0
    cdef double zero = 0.0
    dsymv(&uplo, &nn, &one, &Q[0, 0], &nn, &x[0], &inc, &zero, &out[0], &inc)


def ipm_l1(Q, c, thr, double tol=1e-10, int max_iter=200, double offset=0.0):
    """Compiled twin of :func:`sparseid._kernels_py.ipm_l1`."""
    cdef double[:, ::1] Qv = np.ascontiguousarray(Q, dtype=np.float64)
    cdef double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef double[::1] tv = np.ascontiguousarray(thr, dtype=np.float64)
    cdef Py_ssize_t n = cv.shape[0]
    if n == 0:
        return np.zeros(0), 0, 0
    w_arr = np.zeros(n)
    cdef double[::1] w = w_arr
    cdef double[::1] t = np.ones(n)
    cdef double[::1] s1 = np.ones(n)
    cdef double[::1] s2 = np.ones(n)
    cdef double[::1] z1 = np.ones(n)
    cdef double[::1] z2 = np.ones(n)
    cdef double[::1] bnd = np.zeros(n)
    cdef double[::1] Qw = np.zeros(n)
    cdef double[::1] rw = np.zeros(n)
    cdef double[::1] rt = np.zeros(n)
    cdef double[::1] r1 = np.zeros(n)
    cdef double[::1] r2 = np.zeros(n)
    cdef double[::1] d1 = np.zeros(n)
    cdef double[::1] d2 = np.zeros(n)
    cdef double[::1] ss = np.ones(n)
    cdef double[::1] a1 = np.zeros(n)
    cdef double[::1] a2 = np.zeros(n)
    cdef double[::1] rc1 = np.zeros(n)
    cdef double[::1] rc2 = np.zeros(n)
    cdef double[::1] dw = np.zeros(n)
    cdef double[::1] dt = np.zeros(n)
    cdef double[::1] ds1 = np.zeros(n)
    cdef double[::1] ds2 = np.zeros(n)
    cdef double[::1] dz1 = np.zeros(n)
    cdef double[::1] dz2 = np.zeros(n)
    cdef double[:, ::1] H = np.zeros((n, n))
    cdef double[:, ::1] L = np.zeros((n, n))
    cdef Py_ssize_t i, j
    cdef int it = 0
    cdef int status = 1
    cdef int corrector
    cdef double m = 0.0, scale_d, gap, mu, pobj, res_d, res_p, tmax
    cdef double alpha, mu_aff, sigma, cmax = 0.0, thrmax = 0.0, x, gap_ref

    with nogil:
        for j in range(n):
            if tv[j] > 0:
                bnd[j] = 1.0
                m += 2.0
            if fabs(cv[j]) > cmax:
                cmax = fabs(cv[j])
            if tv[j] > thrmax:
                thrmax = tv[j]
        if m < 1.0:
            m = 1.0
        scale_d = 1.0 + (cmax if cmax > thrmax else thrmax)

        for it in range(1, max_iter + 1):
            _symv(Qv, w, Qw, n)
            gap = 0.0
            pobj = 0.0
            res_d = 0.0
            res_p = 0.0
            tmax = 0.0
            for j in range(n):
                rw[j] = 2.0 * Qw[j] - 2.0 * cv[j] + bnd[j] * (z1[j] - z2[j])
                rt[j] = bnd[j] * (2.0 * tv[j] - z1[j] - z2[j])
                r1[j] = bnd[j] * (w[j] - t[j] + s1[j])
                r2[j] = bnd[j] * (-w[j] - t[j] + s2[j])
                gap += bnd[j] * (s1[j] * z1[j] + s2[j] * z2[j])
                pobj += w[j] * Qw[j] - 2.0 * cv[j] * w[j] + 2.0 * tv[j] * fabs(w[j])
                if fabs(rw[j]) > res_d:
                    res_d = fabs(rw[j])
                if fabs(rt[j]) > res_d:
                    res_d = fabs(rt[j])
                if fabs(r1[j]) > res_p:
                    res_p = fabs(r1[j])
                if fabs(r2[j]) > res_p:
                    res_p = fabs(r2[j])
                if t[j] > tmax:
                    tmax = t[j]
            mu = gap / m
            gap_ref = fabs(offset + pobj)
            if gap_ref < tol * (1.0 + fabs(offset)):
                gap_ref = tol * (1.0 + fabs(offset))
            if res_d <= tol * scale_d and res_p <= tol * (1.0 + tmax) and gap <= tol * gap_ref:
                status = 0
                break
            for i in range(n):
                for j in range(n):
                    H[i, j] = 2.0 * Qv[i, j]
            for j in range(n):
                d1[j] = bnd[j] * z1[j] / s1[j]
                d2[j] = bnd[j] * z2[j] / s2[j]
                ss[j] = d1[j] + d2[j] if bnd[j] > 0 else 1.0
                H[j, j] += bnd[j] * 4.0 * d1[j] * d2[j] / ss[j]
            if _factor(H, L, n) != 0:
                status = 2
                break
            for j in range(n):
                rc1[j] = bnd[j] * s1[j] * z1[j]
                rc2[j] = bnd[j] * s2[j] * z2[j]
            for corrector in range(2):
                for j in range(n):
                    a1[j] = bnd[j] * (-rc1[j] + z1[j] * r1[j]) / s1[j]
                    a2[j] = bnd[j] * (-rc2[j] + z2[j] * r2[j]) / s2[j]
                    dw[j] = -rw[j] - a1[j] + a2[j] + bnd[j] * (d1[j] - d2[j]) * (a1[j] + a2[j] - rt[j]) / ss[j]
                _chol_solve(L, dw, n)
                for j in range(n):
                    dt[j] = bnd[j] * (a1[j] + a2[j] - rt[j] + (d1[j] - d2[j]) * dw[j]) / ss[j]
                    ds1[j] = bnd[j] * (-r1[j] - dw[j] + dt[j])
                    ds2[j] = bnd[j] * (-r2[j] + dw[j] + dt[j])
                    dz1[j] = a1[j] + d1[j] * dw[j] - d1[j] * dt[j]
                    dz2[j] = a2[j] - d2[j] * dw[j] - d2[j] * dt[j]
                alpha = _max_step(s1, ds1, bnd, n)
                x = _max_step(s2, ds2, bnd, n)
                if x < alpha:
                    alpha = x
                x = _max_step(z1, dz1, bnd, n)
                if x < alpha:
                    alpha = x
                x = _max_step(z2, dz2, bnd, n)
                if x < alpha:
                    alpha = x
                if corrector == 0:
                    mu_aff = 0.0
                    for j in range(n):
                        mu_aff += bnd[j] * ((s1[j] + alpha * ds1[j]) * (z1[j] + alpha * dz1[j])
                                            + (s2[j] + alpha * ds2[j]) * (z2[j] + alpha * dz2[j]))
                    mu_aff /= m
                    sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
                    for j in range(n):
                        rc1[j] = bnd[j] * (s1[j] * z1[j] + ds1[j] * dz1[j] - sigma * mu)
                        rc2[j] = bnd[j] * (s2[j] * z2[j] + ds2[j] * dz2[j] - sigma * mu)
            alpha = STEP_FRACTION * alpha
            if alpha > 1.0:
                alpha = 1.0
            for j in range(n):
                w[j] += alpha * dw[j]
                t[j] += alpha * dt[j]
                if bnd[j] > 0:
                    s1[j] += alpha * ds1[j]
                    s2[j] += alpha * ds2[j]
                    z1[j] += alpha * dz1[j]
                    z2[j] += alpha * dz2[j]
    return w_arr, it, status


def fista_l1(Q, c, thr, double step, double tol=1e-12, int max_iter=100000, bint accelerate=True):
    """Compiled twin of :func:`sparseid._kernels_py.fista_l1`."""
    cdef double[:, ::1] Qv = np.ascontiguousarray(Q, dtype=np.float64)
    cdef double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef double[::1] tv = np.ascontiguousarray(thr, dtype=np.float64)
    cdef Py_ssize_t n = cv.shape[0]
    w_arr = np.zeros(n)
    cdef double[::1] w = w_arr
    cdef double[::1] v = np.zeros(n)
    cdef double[::1] g = np.zeros(n)
    cdef double[::1] wn = np.zeros(n)
    cdef double[::1] kappa = np.zeros(n)
    cdef double tk = 1.0, t_new, scale = 1.0, cmax = 0.0, z, dmax, inner, coef
    cdef int it = 0
    cdef int status = 1
    cdef Py_ssize_t j
    if n == 0:
        return w_arr, 0, 1
    with nogil:
        for j in range(n):
            kappa[j] = 2.0 * step * tv[j]
            if fabs(cv[j]) > cmax:
                cmax = fabs(cv[j])
        scale = 1.0 + 2.0 * cmax
        for it in range(1, max_iter + 1):
            _symv(Qv, v, g, n)
            dmax = 0.0
            inner = 0.0
            for j in range(n):
                z = v[j] - step * (2.0 * g[j] - 2.0 * cv[j])
                if z > kappa[j]:
                    wn[j] = z - kappa[j]
                elif z < -kappa[j]:
                    wn[j] = z + kappa[j]
                else:
                    wn[j] = 0.0
                if fabs(wn[j] - v[j]) > dmax:
                    dmax = fabs(wn[j] - v[j])
                inner += (wn[j] - v[j]) * (wn[j] - w[j])
            if dmax / step <= tol * scale:
                for j in range(n):
                    w[j] = wn[j]
                status = 0
                break
            if accelerate:
                if inner < 0.0:
                    tk = 1.0
                t_new = 0.5 * (1.0 + sqrt(1.0 + 4.0 * tk * tk))
                coef = (tk - 1.0) / t_new
                for j in range(n):
                    v[j] = wn[j] + coef * (wn[j] - w[j])
                tk = t_new
            else:
                for j in range(n):
                    v[j] = wn[j]
            for j in range(n):
                w[j] = wn[j]
    return w_arr, it, status
