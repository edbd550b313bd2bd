# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-round screening kernels; same contract as ``_fallback``.

Trimming only needs the ``b`` lowest and ``b`` highest received values under
the (value, position) order, so each coordinate does an O(n b) selection
instead of a full sort.
"""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double THETA_EPS = 1e-15


cdef inline bint _before(double va, Py_ssize_t pa, double vb, Py_ssize_t pb) noexcept nogil:
    return va < vb or (va == vb and pa < pb)


cdef void _select(const double[:, ::1] received, Py_ssize_t lo, Py_ssize_t n, Py_ssize_t k,
                  int b, char* tag, Py_ssize_t* low, Py_ssize_t* up) noexcept nogil:
    # tag[r]: 0 center, 1 lower, 2 upper; low/up list positions from the extreme inward
    cdef Py_ssize_t r, t, best
    for r in range(n):
        tag[r] = 0
    for t in range(b):
        best = -1
        for r in range(n):
            if tag[r] == 0 and (best < 0 or _before(received[lo + r, k], r, received[lo + best, k], best)):
                best = r
        tag[best] = 1
        low[t] = best
    for t in range(b):
        best = -1
        for r in range(n):
            if tag[r] == 0 and (best < 0 or _before(received[lo + best, k], best, received[lo + r, k], r)):
                best = r
        tag[best] = 2
        up[t] = best


def cwtm_round(double[:, ::1] W, long[::1] indptr, long[::1] indices,
               double[:, ::1] received, int b):
    cdef Py_ssize_t M = W.shape[0], d = W.shape[1]
    cdef Py_ssize_t j, k, r, lo, n, maxn = 0
    cdef double acc
    out = np.empty((M, d))
    cdef double[:, ::1] o = out
    for j in range(M):
        if indptr[j + 1] - indptr[j] > maxn:
            maxn = indptr[j + 1] - indptr[j]
    cdef char* tag = <char*>malloc(maxn + 1)
    cdef Py_ssize_t* low = <Py_ssize_t*>malloc((b + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* up = <Py_ssize_t*>malloc((b + 1) * sizeof(Py_ssize_t))
    if tag == NULL or low == NULL or up == NULL:
        free(tag); free(low); free(up)
        raise MemoryError()
    with nogil:
        for j in range(M):
            lo = indptr[j]
            n = indptr[j + 1] - lo
            for k in range(d):
                _select(received, lo, n, k, b, tag, low, up)
                acc = W[j, k]
                for r in range(n):
                    if tag[r] == 0:
                        acc += received[lo + r, k]
                o[j, k] = acc / (n - 2 * b + 1)
    free(tag); free(low); free(up)
    return out


def mixing_round(double[:, ::1] W, long[::1] indptr, long[::1] indices,
                 double[:, ::1] received, cnp.uint8_t[::1] compromised, int b):
    cdef Py_ssize_t M = W.shape[0], d = W.shape[1]
    cdef Py_ssize_t j, k, r, t, lo, n, node, maxn = 0
    cdef int bstar, bk, q, cnt_u, cnt_l
    cdef double inv, u_val, l_val, gap, theta, mass, s_up, s_low, val
    Y = np.zeros((d, M, M))
    Qarr = np.zeros((M, d), dtype=np.int64)
    cdef double[:, :, ::1] y = Y
    cdef long[:, ::1] qv = Qarr
    for j in range(M):
        if indptr[j + 1] - indptr[j] > maxn:
            maxn = indptr[j + 1] - indptr[j]
    cdef char* tag = <char*>malloc(maxn + 1)
    cdef Py_ssize_t* low = <Py_ssize_t*>malloc((b + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* up = <Py_ssize_t*>malloc((b + 1) * sizeof(Py_ssize_t))
    if tag == NULL or low == NULL or up == NULL:
        free(tag); free(low); free(up)
        raise MemoryError()
    cdef bint bad = False
    with nogil:
        for j in range(M):
            lo = indptr[j]
            n = indptr[j + 1] - lo
            inv = 1.0 / (n - 2 * b + 1)
            bstar = 0
            for r in range(n):
                bstar += compromised[lo + r]
            for k in range(d):
                _select(received, lo, n, k, b, tag, low, up)
                y[k, j, j] += inv
                bk = 0
                for r in range(n):
                    if tag[r] == 0:
                        bk += compromised[lo + r]
                q = b - bstar + bk
                qv[j, k] = q
                if q == 0:
                    for r in range(n):
                        if tag[r] == 0:
                            y[k, j, indices[lo + r]] += inv
                    continue
                cnt_u = 0
                cnt_l = 0
                u_val = 0.0
                l_val = 0.0
                for t in range(b):
                    if not compromised[lo + low[t]]:
                        cnt_l += 1
                        l_val += received[lo + low[t], k]
                    if not compromised[lo + up[t]]:
                        cnt_u += 1
                        u_val += received[lo + up[t], k]
                if cnt_u == 0 or cnt_l == 0:
                    bad = True
                    break
                u_val /= cnt_u
                l_val /= cnt_l
                gap = u_val - l_val
                s_up = 0.0
                s_low = 0.0
                for r in range(n):
                    if tag[r] != 0:
                        continue
                    node = indices[lo + r]
                    val = received[lo + r, k]
                    if compromised[lo + r]:
                        mass = inv
                    else:
                        mass = 0.5 * inv
                        y[k, j, node] += 0.5 * inv
                    if gap > 0:
                        theta = (val - l_val) / gap
                    else:
                        theta = 0.5
                    if theta < THETA_EPS:
                        theta = THETA_EPS
                    elif theta > 1.0 - THETA_EPS:
                        theta = 1.0 - THETA_EPS
                    s_up += mass * theta
                    s_low += mass * (1.0 - theta)
                for t in range(b):
                    if not compromised[lo + low[t]]:
                        y[k, j, indices[lo + low[t]]] += s_low / cnt_l
                    if not compromised[lo + up[t]]:
                        y[k, j, indices[lo + up[t]]] += s_up / cnt_u
            if bad:
                break
    free(tag); free(low); free(up)
    if bad:
        raise RuntimeError(f"node {j}: no honest node in upper or lower set while q > 0")
    return Y, Qarr
