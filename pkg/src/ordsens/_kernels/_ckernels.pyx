# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled mirror of pykernels.

One function per pykernels entry point, same formulas and the same scipy
special functions, so both implementations agree to float round-off. Keep the
two files in sync when touching either.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, exp, isfinite, log1p
from libc.stdint cimport int64_t
from scipy.special.cython_special cimport expit as c_expit
from scipy.special.cython_special cimport ndtr as c_ndtr
from scipy.special.cython_special cimport ndtri as c_ndtri

cnp.import_array()

cdef int _LINK_PROBIT = 0
cdef int _LINK_LOGIT = 1
LINK_PROBIT = _LINK_PROBIT
LINK_LOGIT = _LINK_LOGIT

cdef double _INV_SQRT_2PI = 0.3989422804014326779399460599343818684758586311649346576659258296706579258993
cdef double _PROB_FLOOR = 1e-300
cdef double _LOGE2 = 0.693147180559945309417232121458176568


cdef inline double _softplus(double z) nogil:
    # log(1 + exp(z)), matching np.logaddexp(0, z) branch for branch
    cdef double tmp
    if z == 0.0:
        return _LOGE2
    tmp = -z
    if tmp > 0.0:
        return log1p(exp(z))
    elif tmp <= 0.0:
        return z + log1p(exp(tmp))
    return tmp  # propagate nan


def cum_link_terms(double[::1] eta, double[::1] zeta, int64_t[::1] codes, int link):
    """See pykernels.cum_link_terms."""
    cdef Py_ssize_t n = eta.shape[0]
    cdef Py_ssize_t K = zeta.shape[0] + 1
    cdef cnp.ndarray[double, ndim=1] p_arr = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] fa_arr = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] fb_arr = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] dfa_arr = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] dfb_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] p = p_arr
    cdef double[::1] fa = fa_arr
    cdef double[::1] fb = fb_arr
    cdef double[::1] dfa = dfa_arr
    cdef double[::1] dfb = dfb_arr
    cdef Py_ssize_t i
    cdef int64_t k
    cdef double a, b, pa, pb, va, vb, pr
    if link != _LINK_PROBIT and link != _LINK_LOGIT:
        raise ValueError(f"unknown link id {link}")
    with nogil:
        for i in range(n):
            k = codes[i]
            if k < K:
                a = zeta[k - 1] - eta[i]
                if link == _LINK_PROBIT:
                    pa = c_ndtr(a)
                    va = exp(-0.5 * a * a) * _INV_SQRT_2PI
                    fa[i] = va
                    dfa[i] = -a * va
                else:
                    pa = c_expit(a)
                    va = pa * (1.0 - pa)
                    fa[i] = va
                    dfa[i] = va * (1.0 - 2.0 * pa)
            else:
                pa = 1.0
                fa[i] = 0.0
                dfa[i] = 0.0
            if k > 1:
                b = zeta[k - 2] - eta[i]
                if link == _LINK_PROBIT:
                    pb = c_ndtr(b)
                    vb = exp(-0.5 * b * b) * _INV_SQRT_2PI
                    fb[i] = vb
                    dfb[i] = -b * vb
                else:
                    pb = c_expit(b)
                    vb = pb * (1.0 - pb)
                    fb[i] = vb
                    dfb[i] = vb * (1.0 - 2.0 * pb)
            else:
                pb = 0.0
                fb[i] = 0.0
                dfb[i] = 0.0
            pr = pa - pb
            if pr < _PROB_FLOOR:
                pr = _PROB_FLOOR
            p[i] = pr
    return p_arr, fa_arr, fb_arr, dfa_arr, dfb_arr


def truncnorm_unit(double[::1] mu, double[::1] lo, double[::1] hi, double[::1] u):
    """See pykernels.truncnorm_unit."""
    cdef Py_ssize_t n = mu.shape[0]
    cdef cnp.ndarray[double, ndim=1] out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef double m, l, h, uu, plo, phi, p, x
    cdef bint refl
    with nogil:
        for i in range(n):
            refl = (lo[i] - mu[i]) >= 0.0
            if refl:
                m = -mu[i]
                l = -hi[i]
                h = -lo[i]
                uu = 1.0 - u[i]
            else:
                m = mu[i]
                l = lo[i]
                h = hi[i]
                uu = u[i]
            plo = c_ndtr(l - m)
            phi = c_ndtr(h - m)
            p = plo + uu * (phi - plo)
            if p < _PROB_FLOOR:
                p = _PROB_FLOOR
            elif p > 1.0 - 1e-16:
                p = 1.0 - 1e-16
            x = m + c_ndtri(p)
            if refl:
                x = -x
            if x < lo[i]:
                x = lo[i]
            elif x > hi[i]:
                x = hi[i]
            out[i] = x
    return out_arr


def classify_smallest_k(double[::1] theta, double[::1] zeta_star):
    """See pykernels.classify_smallest_k."""
    cdef Py_ssize_t n = theta.shape[0]
    cdef Py_ssize_t m = zeta_star.shape[0]
    cdef cnp.ndarray[int64_t, ndim=1] out_arr = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] out = out_arr
    cdef Py_ssize_t i, k
    cdef int64_t cat
    with nogil:
        for i in range(n):
            cat = m + 1
            for k in range(m):
                if theta[i] <= zeta_star[k]:
                    cat = k + 1
                    break
            out[i] = cat
    return out_arr


def bern_loglik_sums(double[:, ::1] z, double[::1] y, int64_t[::1] starts):
    """See pykernels.bern_loglik_sums."""
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t J = z.shape[1]
    cdef Py_ssize_t G = starts.shape[0]
    cdef cnp.ndarray[double, ndim=2] out_arr = np.zeros((G, J), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t g, i, j, hi_row
    with nogil:
        for g in range(G):
            hi_row = starts[g + 1] if g + 1 < G else n
            for i in range(starts[g], hi_row):
                for j in range(J):
                    out[g, j] += y[i] * z[i, j] - _softplus(z[i, j])
    return out_arr


def bern_score_info(double[::1] z, double[::1] y, int64_t[::1] starts):
    """See pykernels.bern_score_info."""
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t G = starts.shape[0]
    cdef cnp.ndarray[double, ndim=1] score_arr = np.zeros(G, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] info_arr = np.zeros(G, dtype=np.float64)
    cdef double[::1] score = score_arr
    cdef double[::1] info = info_arr
    cdef Py_ssize_t g, i, hi_row
    cdef double p
    with nogil:
        for g in range(G):
            hi_row = starts[g + 1] if g + 1 < G else n
            for i in range(starts[g], hi_row):
                p = c_expit(z[i])
                score[g] += y[i] - p
                info[g] += p * (1.0 - p)
    return score_arr, info_arr
