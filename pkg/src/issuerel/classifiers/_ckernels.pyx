# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled solver kernels. Mirrors ``_pykernels`` step for step."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, fabs, sqrt, INFINITY

cnp.import_array()

cdef double ARMIJO = 0.01
cdef int MAX_BACKTRACK = 30
cdef int MAX_INNER = 1000


cdef inline double _soft(double z, double t) noexcept nogil:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def soft_threshold(double z, double t):
    if t < 0:
        raise ValueError("threshold must be non-negative")
    return _soft(z, t)


cdef inline double _logloss(double z) noexcept nogil:
    if z > 0:
        return log1p(exp(-z))
    return -z + log1p(exp(z))


cdef inline double _sig_neg(double z) noexcept nogil:
    cdef double e
    if z >= 0:
        e = exp(-z)
        return e / (1.0 + e)
    return 1.0 / (1.0 + exp(z))


cdef double _kkt(const double[::1] g, double gb, const double[::1] w, double lam) noexcept nogil:
    cdef Py_ssize_t j
    cdef double v, res = fabs(gb)
    for j in range(g.shape[0]):
        if w[j] > 0.0:
            v = fabs(g[j] + lam)
        elif w[j] < 0.0:
            v = fabs(g[j] - lam)
        else:
            v = fabs(g[j]) - lam
        if v > res:
            res = v
    return res


def kkt_residual(g, double gb, w, double lam):
    return _kkt(np.ascontiguousarray(g, dtype=np.float64), gb,
                np.ascontiguousarray(w, dtype=np.float64), lam)


cdef double _quadratic_cd(const double[::1, :] X, const double[::1] g, double gb,
                          const double[::1] v, const double[::1] hd, double hb,
                          double[::1] u, double* db, double[::1] r, double lam,
                          double inner_tol, int max_sweeps) noexcept nogil:
    cdef Py_ssize_t n = X.shape[0], h = X.shape[1], i, j
    cdef double gj, uj, hj, new, delta, acc, max_change
    cdef bint full = True
    cdef int sweeps = 0
    while sweeps < max_sweeps:
        max_change = 0.0
        for j in range(h):
            uj = u[j]
            if not full and uj == 0.0:
                continue
            acc = 0.0
            for i in range(n):
                acc += X[i, j] * (v[i] * r[i])
            gj = g[j] + acc / n
            if uj == 0.0 and fabs(gj) <= lam:
                continue
            hj = hd[j]
            new = _soft(uj - gj / hj, lam / hj)
            delta = new - uj
            if delta != 0.0:
                u[j] = new
                for i in range(n):
                    r[i] += delta * X[i, j]
                if hj * fabs(delta) > max_change:
                    max_change = hj * fabs(delta)
        acc = 0.0
        for i in range(n):
            acc += v[i] * r[i]
        delta = -(gb + acc / n) / hb
        db[0] += delta
        for i in range(n):
            r[i] += delta
        if hb * fabs(delta) > max_change:
            max_change = hb * fabs(delta)
        sweeps += 1
        if max_change <= inner_tol:
            if full:
                break
            full = True
        else:
            full = False
    return max_change


def cd_logistic_l1(X, y, double lam, cnp.ndarray[cnp.float64_t, ndim=1] w,
                   double b, double tol, int max_iter):
    cdef const double[::1, :] Xv = np.asfortranarray(X, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[::1] wv = w
    cdef Py_ssize_t n = Xv.shape[0], h = Xv.shape[1], i, j
    cdef double[::1] z = np.empty(n)
    cdef double[::1] zt = np.empty(n)
    cdef double[::1] s = np.empty(n)
    cdef double[::1] v = np.empty(n)
    cdef double[::1] r = np.empty(n)
    cdef double[::1] g = np.empty(h)
    cdef double[::1] hd = np.empty(h)
    cdef double[::1] u = np.empty(h)
    cdef list objectives = []
    cdef double acc, gb, hb, res, inner_tol, delta, t, f, ft, db, l1w, l1u, l1t, q
    cdef int it = 0, k
    cdef bint converged = False, accepted

    f = 0.0
    for i in range(n):
        acc = b
        for j in range(h):
            acc += Xv[i, j] * wv[j]
        z[i] = yv[i] * acc
        f += _logloss(z[i])
    l1w = 0.0
    for j in range(h):
        l1w += fabs(wv[j])
    f = f / n + lam * l1w

    while True:
        with nogil:
            gb = 0.0
            hb = 0.0
            for i in range(n):
                s[i] = _sig_neg(z[i])
                gb -= yv[i] * s[i] / n
                q = s[i] * (1.0 - s[i])
                v[i] = q if q > 1e-10 else 1e-10
                hb += v[i]
            hb /= n
            for j in range(h):
                acc = 0.0
                q = 0.0
                for i in range(n):
                    acc -= Xv[i, j] * (yv[i] * s[i] / n)
                    q += Xv[i, j] * Xv[i, j] * v[i]
                g[j] = acc
                q /= n
                hd[j] = q if q > 1e-12 else 1e-12
            res = _kkt(g, gb, wv, lam)
        if res <= tol:
            converged = True
            break
        if it >= max_iter:
            break
        with nogil:
            inner_tol = 0.1 * res
            if inner_tol < 0.01 * tol:
                inner_tol = 0.01 * tol
            for j in range(h):
                u[j] = wv[j]
            for i in range(n):
                r[i] = 0.0
            db = 0.0
            _quadratic_cd(Xv, g, gb, v, hd, hb, u, &db, r, lam, inner_tol, MAX_INNER)
            delta = gb * db
            l1u = 0.0
            l1w = 0.0
            for j in range(h):
                delta += g[j] * (u[j] - wv[j])
                l1u += fabs(u[j])
                l1w += fabs(wv[j])
            delta += lam * (l1u - l1w)
        if not delta < 0.0:
            break
        t = 1.0
        accepted = False
        with nogil:
            for k in range(MAX_BACKTRACK):
                ft = 0.0
                for i in range(n):
                    zt[i] = z[i] + t * yv[i] * r[i]
                    ft += _logloss(zt[i])
                l1t = 0.0
                for j in range(h):
                    l1t += fabs(wv[j] + t * (u[j] - wv[j]))
                ft = ft / n + lam * l1t
                if ft <= f + ARMIJO * t * delta:
                    accepted = True
                    break
                t *= 0.5
        if not accepted:
            break
        for j in range(h):
            wv[j] += t * (u[j] - wv[j])
        b += t * db
        for i in range(n):
            z[i] = zt[i]
        f = ft
        objectives.append(f)
        it += 1
    return w, b, it, bool(converged), np.array(objectives, dtype=np.float64)


def prox_subgradient_hinge(X, y, double lam, bint l1, w, double b, int n_iter, double eta0):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0], h = Xv.shape[1], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w_arr = np.array(w, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] best_arr = w_arr.copy()
    cdef double[::1] wv = w_arr
    cdef double[::1] best_w = best_arr
    cdef double[::1] gw = np.empty(h)
    cdef double best = INFINITY, best_b = b, obj, pen, m, gb, eta, v
    cdef int t, best_t = 0

    with nogil:
        for t in range(n_iter + 1):
            obj = 0.0
            gb = 0.0
            for j in range(h):
                gw[j] = 0.0
            for i in range(n):
                m = b
                for j in range(h):
                    m += Xv[i, j] * wv[j]
                m *= yv[i]
                if m < 1.0:
                    obj += 1.0 - m
                    gb -= yv[i]
                    for j in range(h):
                        gw[j] -= yv[i] * Xv[i, j]
            pen = 0.0
            for j in range(h):
                pen += fabs(wv[j]) if l1 else 0.5 * wv[j] * wv[j]
            obj = obj / n + lam * pen
            if obj < best:
                best = obj
                best_b = b
                best_t = t
                for j in range(h):
                    best_w[j] = wv[j]
            if t == n_iter:
                break
            eta = eta0 / sqrt(t + 1.0)
            for j in range(h):
                v = wv[j] - eta * gw[j] / n
                if l1:
                    wv[j] = _soft(v, eta * lam)
                else:
                    wv[j] = v / (1.0 + eta * lam)
            b -= eta * gb / n
    return best_arr, best_b, best, best_t
