# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot scalar loops in :mod:`irsnoma._kernels_py`."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs

cnp.import_array()

DEF NEWTON_MAX = 100
DEF KMAX = 64


cdef double _balanced(const double *s, int K, double snr, double *alpha) noexcept nogil:
    """Balanced SINR for ascending strengths ``s``; writes normalized ``alpha``."""
    cdef double c[KMAX]
    cdef double u, q, tail, dtail, ak, step
    cdef int k, it
    for k in range(K):
        c[k] = 1.0 / (snr * s[k])
    u = log(snr * s[K - 1])
    for it in range(NEWTON_MAX):
        q = exp(u)
        tail = 0.0
        dtail = 0.0
        for k in range(K - 1, -1, -1):
            ak = q * (tail + c[k])
            dtail = dtail + tail + c[k] + q * dtail
            tail = tail + ak
        step = log(tail) * tail / (q * dtail)
        u = u - step
        if fabs(step) <= 1e-14 * (fabs(u) if fabs(u) > 1.0 else 1.0):
            break
    q = exp(u)
    if alpha != NULL:
        tail = 0.0
        for k in range(K - 1, -1, -1):
            alpha[k] = q * (tail + c[k])
            tail = tail + alpha[k]
        for k in range(K):
            alpha[k] = alpha[k] / tail
    return q


def balanced_sinr_batch(strengths, double snr):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] s = np.ascontiguousarray(np.atleast_2d(strengths), dtype=np.float64)
    cdef Py_ssize_t B = s.shape[0], b
    cdef int K = <int>s.shape[1]
    if K > KMAX:
        raise ValueError("too many users for the compiled kernel")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] q = np.empty(B)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] alpha = np.empty((B, K))
    with nogil:
        for b in range(B):
            q[b] = _balanced(&s[b, 0], K, snr, &alpha[b, 0])
    return q, alpha


def suffix_min(strengths):
    s = np.asarray(strengths, float)
    return np.minimum.accumulate(s[..., ::-1], axis=-1)[..., ::-1]


def siso_grid_search(J, v, double snr, int levels, bint enforce_order, chunk=None):
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] Jc = np.ascontiguousarray(J, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] vc = np.ascontiguousarray(v, dtype=np.complex128)
    cdef int K = <int>Jc.shape[0], M = <int>Jc.shape[1]
    if K > KMAX:
        raise ValueError("too many users for the compiled kernel")
    if M > 64:
        raise ValueError("grid search limited to 64 elements")
    roots = np.exp(2j * np.pi * np.arange(levels) / levels)
    # table[m, d, k]: contribution of element m at level d to user k
    table = np.ascontiguousarray(np.transpose(Jc[:, :, None] * roots[None, None, :], (1, 2, 0)))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] tr = np.ascontiguousarray(table.real)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] ti = np.ascontiguousarray(table.imag)
    # prefix[m, k]: direct term plus elements before m
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pr = np.zeros((M + 1, K))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pi = np.zeros((M + 1, K))
    cdef double s[KMAX]
    cdef int digits[64]
    cdef long long total = 1, idx, best_idx = -1
    cdef double best_q = -1.0, q, hr, hi
    cdef int k, m, d, dirty
    cdef bint ok
    for m in range(M):
        total *= levels
        digits[m] = 0
    for k in range(K):
        pr[0, k] = vc[k].real
        pi[0, k] = vc[k].imag
    dirty = 0
    with nogil:
        for idx in range(total):
            for m in range(dirty, M):
                d = digits[m]
                for k in range(K):
                    pr[m + 1, k] = pr[m, k] + tr[m, d, k]
                    pi[m + 1, k] = pi[m, k] + ti[m, d, k]
            for k in range(K):
                hr = pr[M, k]
                hi = pi[M, k]
                s[k] = hr * hr + hi * hi
            ok = True
            if enforce_order:
                for k in range(K - 1):
                    if s[k + 1] < s[k]:
                        ok = False
                        break
            if ok:
                for k in range(K - 2, -1, -1):
                    if s[k + 1] < s[k]:
                        s[k] = s[k + 1]
                if best_q > 0.0:
                    # sum(alpha(q)) is increasing, so reaching 1 at best_q means no gain
                    hr = 0.0
                    for k in range(K - 1, -1, -1):
                        hr = hr + best_q * (hr + 1.0 / (snr * s[k]))
                    if hr >= 1.0:
                        ok = False
            if ok:
                q = _balanced(s, K, snr, NULL)
                if q > best_q:
                    best_q = q
                    best_idx = idx
            # advance the base-`levels` counter, last element fastest
            m = M - 1
            while m >= 0:
                digits[m] += 1
                if digits[m] < levels:
                    break
                digits[m] = 0
                m -= 1
            dirty = m if m >= 0 else 0
    return best_q, best_idx
