# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: partial selection and the stochastic epochs.

Every function here has a pure-Python twin in ``_fallback`` with the same
signature and semantics; ``rgrasp.kernels`` picks one at import time.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, isfinite
from libc.stdint cimport int64_t, uint64_t, uint8_t
from libc.stdlib cimport malloc, free

cnp.import_array()

LEAST_SQUARES = 0
LOGISTIC = 1


cdef inline uint64_t _xorshift(uint64_t* state) noexcept nogil:
    cdef uint64_t x = state[0]
    x ^= x >> 12
    x ^= x << 25
    x ^= x >> 27
    state[0] = x
    return x * <uint64_t>0x2545F4914F6CDD1D


cdef inline bint _ahead(const double* mag, int64_t a, int64_t b) noexcept nogil:
    # rank order: larger magnitude first, lower index on ties
    return mag[a] > mag[b] or (mag[a] == mag[b] and a < b)


cdef int64_t _select(const double* mag, int64_t* idx, int64_t n, int64_t k) noexcept nogil:
    """Rearrange idx so idx[:k] holds the k entries ranked first. Returns comparisons."""
    cdef int64_t lo = 0, hi = n - 1, p, store, i, pivot, tmp
    cdef int64_t ncmp = 0
    cdef uint64_t state = <uint64_t>0x9E3779B97F4A7C15 ^ <uint64_t>n
    if k <= 0 or k >= n:
        return 0
    while lo < hi:
        p = lo + <int64_t>(_xorshift(&state) % <uint64_t>(hi - lo + 1))
        pivot = idx[p]
        idx[p] = idx[hi]
        idx[hi] = pivot
        store = lo
        for i in range(lo, hi):
            ncmp += 1
            if _ahead(mag, idx[i], pivot):
                tmp = idx[i]
                idx[i] = idx[store]
                idx[store] = tmp
                store += 1
        idx[hi] = idx[store]
        idx[store] = pivot
        if store == k - 1:
            break
        elif store > k - 1:
            hi = store - 1
        else:
            lo = store + 1
    return ncmp


cdef double _kth_value(double* buf, int64_t n, int64_t k) noexcept nogil:
    """k-th largest value of buf[:n] (1-based k); buf is scrambled."""
    cdef int64_t lo = 0, hi = n - 1, i, j, t = k - 1
    cdef double pv, tmp
    cdef uint64_t state = <uint64_t>0x9E3779B97F4A7C15 ^ <uint64_t>n
    while lo < hi:
        pv = buf[lo + <int64_t>(_xorshift(&state) % <uint64_t>(hi - lo + 1))]
        # two-pointer split; scans stop on values equal to the pivot, so runs
        # of equal values (zeros of a sparse iterate) still split evenly
        i = lo
        j = hi
        while i <= j:
            while buf[i] > pv:
                i += 1
            while buf[j] < pv:
                j -= 1
            if i <= j:
                tmp = buf[i]; buf[i] = buf[j]; buf[j] = tmp
                i += 1
                j -= 1
        # now buf[lo..j] >= pv, buf[i..hi] <= pv and everything between equals pv
        if t <= j:
            hi = j
        elif t >= i:
            lo = i
        else:
            return buf[t]
    return buf[t]


cdef int64_t _keep_quota(const double* z, const int64_t* dom, int64_t n, int64_t k,
                         double* buf, double* v) noexcept nogil:
    """Cutoff value v and how many entries equal to v fit in the top-k."""
    cdef int64_t i, above = 0
    cdef double a
    for i in range(n):
        buf[i] = fabs(z[dom[i]]) if dom != NULL else fabs(z[i])
    v[0] = _kth_value(buf, n, k)
    for i in range(n):
        a = fabs(z[dom[i]]) if dom != NULL else fabs(z[i])
        if a > v[0]:
            above += 1
    return k - above


cdef void _threshold_inplace(double* z, const int64_t* dom, int64_t n, int64_t k,
                             double* buf) noexcept nogil:
    """Zero every entry of z[dom] outside the top-k of that sub-vector."""
    cdef int64_t i, q, need
    cdef double v, a
    if k >= n:
        return
    if k <= 0:
        for i in range(n):
            z[dom[i] if dom != NULL else i] = 0.0
        return
    need = _keep_quota(z, dom, n, k, buf, &v)
    # ties at the cutoff go to the lower positions
    for i in range(n):
        q = dom[i] if dom != NULL else i
        a = fabs(z[q])
        if a > v:
            continue
        if a == v and need > 0:
            need -= 1
            continue
        z[q] = 0.0


def select_top(const double[::1] x, Py_ssize_t k):
    """Sorted indices of the k largest-magnitude entries, plus the comparison count."""
    cdef int64_t n = x.shape[0], i, j, ncmp = 0
    cdef cnp.ndarray[cnp.int64_t, ndim=1] idx = np.empty(n, dtype=np.int64)
    cdef int64_t* ip = <int64_t*>cnp.PyArray_DATA(idx)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out
    cdef int64_t* op
    cdef double* mag
    cdef uint8_t* keep
    for i in range(n):
        ip[i] = i
    if k >= n:
        return idx, 0
    out = np.empty(k, dtype=np.int64)
    op = <int64_t*>cnp.PyArray_DATA(out)
    mag = <double*>malloc(max(n, 1) * (sizeof(double) + sizeof(uint8_t)))
    if mag == NULL:
        raise MemoryError()
    keep = <uint8_t*>(mag + n)
    with nogil:
        for i in range(n):
            mag[i] = fabs(x[i])
            keep[i] = 0
        ncmp = _select(mag, ip, n, k)
        # emit the kept indices in ascending order without a sort
        for i in range(k):
            keep[ip[i]] = 1
        j = 0
        for i in range(n):
            if keep[i]:
                op[j] = i
                j += 1
    free(mag)
    return out, int(ncmp)


def select_top_fast(const double[::1] x, Py_ssize_t k):
    """Same selection as ``select_top`` without the comparison count."""
    cdef int64_t n = x.shape[0], i, j = 0, need
    cdef double v, a
    cdef double* buf
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out
    cdef int64_t* op
    if k >= n:
        return np.arange(n, dtype=np.int64)
    out = np.empty(max(k, 0), dtype=np.int64)
    if k <= 0:
        return out
    op = <int64_t*>cnp.PyArray_DATA(out)
    buf = <double*>malloc(n * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    with nogil:
        need = _keep_quota(&x[0], NULL, n, k, buf, &v)
        for i in range(n):
            a = fabs(x[i])
            if a > v or (a == v and need > 0):
                if a == v:
                    need -= 1
                op[j] = i
                j += 1
    free(buf)
    return out


cdef inline double _dloss(int kind, double margin, double y) noexcept nogil:
    cdef double t, e
    if kind == 0:
        return margin - y
    t = y * margin
    if t > 0:
        e = exp(-t)
        return -y * e / (1.0 + e)
    return -y / (1.0 + exp(t))


def sparse_dot(const int64_t[::1] indices, const double[::1] values, const double[::1] x):
    cdef Py_ssize_t k
    cdef double acc = 0.0
    for k in range(indices.shape[0]):
        acc += values[k] * x[indices[k]]
    return acc


def svrg_epoch(const int64_t[::1] indptr, const int64_t[::1] indices, const double[::1] data,
               const double[::1] y, int kind, const double[::1] z0, const double[::1] g,
               const double[::1] snap_margin, const int64_t[::1] active, double eta,
               const int64_t[::1] samples, Py_ssize_t period, Py_ssize_t keep, bint restrict):
    """Semi-stochastic epoch with a lazily applied full-gradient term.

    The iterate is held as z = u - eta * c * g_A, where g_A is g on the update
    domain A (the active set when ``restrict``, all coordinates otherwise) and
    c counts steps since the last materialisation. A step then touches only
    the sampled row. Returns (z, threshold_count, failed_step); failed_step is
    0 on success, else the 1-based step at which a non-finite value appeared.
    """
    cdef int64_t d = z0.shape[0], na = active.shape[0], J = samples.shape[0]
    cdef int64_t j, i, p, col, q, ndom, ht = 0, fail = 0
    cdef double a, b, coef, c = 0.0, w
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u_arr = np.array(z0, dtype=np.float64, copy=True)
    cdef double* u = <double*>cnp.PyArray_DATA(u_arr)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] mask_arr
    cdef uint8_t* mask = NULL
    cdef const int64_t* dom = NULL
    cdef double* buf = NULL

    if restrict:
        mask_arr = np.zeros(d, dtype=np.uint8)
        mask = <uint8_t*>cnp.PyArray_DATA(mask_arr)
        for q in range(na):
            mask[active[q]] = 1
        # the restricted iterate starts at z0 restricted to A
        for q in range(d):
            if not mask[q]:
                u[q] = 0.0
        ndom = na
        if na > 0:
            dom = &active[0]
    else:
        ndom = d

    if period > 0 and J >= period:
        buf = <double*>malloc(max(ndom, 1) * sizeof(double))
        if buf == NULL:
            raise MemoryError()

    with nogil:
        for j in range(1, J + 1):
            i = samples[j - 1]
            a = 0.0
            b = 0.0
            if restrict:
                for p in range(indptr[i], indptr[i + 1]):
                    col = indices[p]
                    a += data[p] * u[col]
                    if mask[col]:
                        b += data[p] * g[col]
            else:
                for p in range(indptr[i], indptr[i + 1]):
                    col = indices[p]
                    a += data[p] * u[col]
                    b += data[p] * g[col]
            coef = _dloss(kind, a - eta * c * b, y[i]) - _dloss(kind, snap_margin[i], y[i])
            if not isfinite(coef):
                fail = j
                break
            w = eta * coef
            if restrict:
                for p in range(indptr[i], indptr[i + 1]):
                    col = indices[p]
                    if mask[col]:
                        u[col] -= w * data[p]
            else:
                for p in range(indptr[i], indptr[i + 1]):
                    u[indices[p]] -= w * data[p]
            c += 1.0

            if period > 0 and j % period == 0:
                if restrict:
                    for q in range(na):
                        col = active[q]
                        u[col] -= eta * c * g[col]
                        if not isfinite(u[col]):
                            fail = j
                else:
                    for q in range(d):
                        u[q] -= eta * c * g[q]
                        if not isfinite(u[q]):
                            fail = j
                c = 0.0
                if fail:
                    break
                _threshold_inplace(u, dom, ndom, keep, buf)
                ht += 1

        if not fail and c > 0:
            if restrict:
                for q in range(na):
                    col = active[q]
                    u[col] -= eta * c * g[col]
            else:
                for q in range(d):
                    u[q] -= eta * c * g[q]
            for q in range(d):
                if not isfinite(u[q]):
                    fail = J
                    break

    free(buf)
    return u_arr, int(ht), int(fail)


def svrght_epoch(const int64_t[::1] indptr, const int64_t[::1] indices, const double[::1] data,
                 const double[::1] y, int kind, const double[::1] z0, const double[::1] g,
                 const double[::1] snap_margin, double eta, const int64_t[::1] samples,
                 Py_ssize_t s):
    """Variance-reduced steps with a full hard threshold after every step."""
    cdef int64_t d = z0.shape[0], J = samples.shape[0]
    cdef int64_t j, i, p, q, fail = 0
    cdef double a, coef, w
    cdef cnp.ndarray[cnp.float64_t, ndim=1] z_arr = np.array(z0, dtype=np.float64, copy=True)
    cdef double* z = <double*>cnp.PyArray_DATA(z_arr)
    cdef double* buf = <double*>malloc(max(d, 1) * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    with nogil:
        for j in range(1, J + 1):
            i = samples[j - 1]
            a = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                a += data[p] * z[indices[p]]
            coef = _dloss(kind, a, y[i]) - _dloss(kind, snap_margin[i], y[i])
            if not isfinite(coef):
                fail = j
                break
            w = eta * coef
            for p in range(indptr[i], indptr[i + 1]):
                z[indices[p]] -= w * data[p]
            for q in range(d):
                z[q] -= eta * g[q]
            _threshold_inplace(z, NULL, d, s, buf)
    free(buf)
    return z_arr, int(fail)


def sght_steps(const int64_t[::1] indptr, const int64_t[::1] indices, const double[::1] data,
               const double[::1] y, int kind, const double[::1] x0, double eta,
               const int64_t[::1] samples, Py_ssize_t s):
    """Plain stochastic gradient steps, each followed by a full hard threshold."""
    cdef int64_t d = x0.shape[0], J = samples.shape[0]
    cdef int64_t j, i, p, fail = 0
    cdef double a, coef, w
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x_arr = np.array(x0, dtype=np.float64, copy=True)
    cdef double* x = <double*>cnp.PyArray_DATA(x_arr)
    cdef double* buf = <double*>malloc(max(d, 1) * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    with nogil:
        for j in range(1, J + 1):
            i = samples[j - 1]
            a = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                a += data[p] * x[indices[p]]
            coef = _dloss(kind, a, y[i])
            w = eta * coef
            if not isfinite(w):
                fail = j
                break
            for p in range(indptr[i], indptr[i + 1]):
                x[indices[p]] -= w * data[p]
            _threshold_inplace(x, NULL, d, s, buf)
    free(buf)
    return x_arr, int(fail)
