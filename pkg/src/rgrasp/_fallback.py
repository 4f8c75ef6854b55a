"""Pure-Python/numpy twins of the compiled kernels in ``_kernels.pyx``.

Semantics match the compiled versions; results agree to rounding, not bit
for bit, because numpy reductions sum in a different order.
"""
import functools

import numpy as np

LEAST_SQUARES = 0
LOGISTIC = 1

_MASK64 = (1 << 64) - 1


def quickselect_top(mag, k):
    """Reference quickselect on a Python list of magnitudes.

    Returns (indices of the top k, unsorted; comparison count). Uses the same
    pivot stream and Lomuto partition as the compiled kernel, so the counts
    agree exactly.
    """
    n = len(mag)
    idx = list(range(n))
    if k <= 0 or k >= n:
        return idx[:max(k, 0)], 0
    state = (0x9E3779B97F4A7C15 ^ n) & _MASK64
    lo, hi, ncmp = 0, n - 1, 0
    while lo < hi:
        state ^= state >> 12
        state ^= (state << 25) & _MASK64
        state ^= state >> 27
        r = (state * 0x2545F4914F6CDD1D) & _MASK64
        p = lo + r % (hi - lo + 1)
        pivot = idx[p]
        idx[p] = idx[hi]
        idx[hi] = pivot
        pm = mag[pivot]
        store = lo
        for i in range(lo, hi):
            ncmp += 1
            a = idx[i]
            ma = mag[a]
            if ma > pm or (ma == pm and a < pivot):
                idx[i], idx[store] = idx[store], a
                store += 1
        idx[hi] = idx[store]
        idx[store] = pivot
        if store == k - 1:
            break
        elif store > k - 1:
            hi = store - 1
        else:
            lo = store + 1
    return idx[:k], ncmp


def _top_indices(mag, k):
    # O(d) selection that honours the lower-index tie rule
    n = mag.shape[0]
    if k >= n:
        return np.arange(n, dtype=np.int64)
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    kth = np.partition(mag, n - k)[n - k]
    above = np.flatnonzero(mag > kth)
    ties = np.flatnonzero(mag == kth)[:k - above.shape[0]]
    return np.sort(np.concatenate([above, ties])).astype(np.int64, copy=False)


def select_top(x, k):
    mag = np.abs(np.asarray(x, dtype=np.float64))
    if k >= mag.shape[0]:
        return np.arange(mag.shape[0], dtype=np.int64), 0
    top, ncmp = quickselect_top(mag.tolist(), k)
    return np.sort(np.asarray(top, dtype=np.int64)), ncmp


def select_top_fast(x, k):
    """Same selection as ``select_top`` without comparison counting."""
    return _top_indices(np.abs(np.asarray(x, dtype=np.float64)), k)


def _threshold_inplace(z, dom, k):
    vals = z if dom is None else z[dom]
    if k >= vals.shape[0]:
        return
    keep = _top_indices(np.abs(vals), k)
    drop = np.ones(vals.shape[0], dtype=bool)
    drop[keep] = False
    if dom is None:
        z[drop] = 0.0
    else:
        z[dom[drop]] = 0.0


def _dloss(kind, margin, y):
    if kind == LEAST_SQUARES:
        return margin - y
    t = y * margin
    if t > 0:
        e = np.exp(-t)
        return -y * e / (1.0 + e)
    return -y / (1.0 + np.exp(t))


def sparse_dot(indices, values, x):
    return float(np.dot(values, x[indices]))


def _quiet(fn):
    # overflow is detected and reported through the fail index instead
    @functools.wraps(fn)
    def wrapper(*args):
        with np.errstate(over="ignore", invalid="ignore"):
            return fn(*args)
    return wrapper


@_quiet
def svrg_epoch(indptr, indices, data, y, kind, z0, g, snap_margin, active, eta,
               samples, period, keep, restrict):
    d = z0.shape[0]
    u = np.array(z0, dtype=np.float64, copy=True)
    if restrict:
        mask = np.zeros(d, dtype=bool)
        mask[active] = True
        u[~mask] = 0.0
        dom = active
        g_dom = np.where(mask, g, 0.0)
    else:
        mask = None
        dom = None
        g_dom = g
    c = 0.0
    ht = 0
    fail = 0
    for j in range(1, samples.shape[0] + 1):
        i = samples[j - 1]
        lo, hi = indptr[i], indptr[i + 1]
        cols = indices[lo:hi]
        vals = data[lo:hi]
        a = float(np.dot(vals, u[cols]))
        b = float(np.dot(vals, g_dom[cols]))
        coef = _dloss(kind, a - eta * c * b, y[i]) - _dloss(kind, snap_margin[i], y[i])
        if not np.isfinite(coef):
            fail = j
            break
        if restrict:
            sel = mask[cols]
            u[cols[sel]] -= (eta * coef) * vals[sel]
        else:
            u[cols] -= (eta * coef) * vals
        c += 1.0
        if period > 0 and j % period == 0:
            if restrict:
                u[active] -= eta * c * g[active]
                ok = np.all(np.isfinite(u[active]))
            else:
                u -= eta * c * g
                ok = np.all(np.isfinite(u))
            c = 0.0
            if not ok:
                fail = j
                break
            _threshold_inplace(u, dom, keep)
            ht += 1
    if not fail and c > 0:
        if restrict:
            u[active] -= eta * c * g[active]
        else:
            u -= eta * c * g
        if not np.all(np.isfinite(u)):
            fail = samples.shape[0]
    return u, ht, fail


@_quiet
def svrght_epoch(indptr, indices, data, y, kind, z0, g, snap_margin, eta, samples, s):
    z = np.array(z0, dtype=np.float64, copy=True)
    for j in range(1, samples.shape[0] + 1):
        i = samples[j - 1]
        lo, hi = indptr[i], indptr[i + 1]
        cols = indices[lo:hi]
        vals = data[lo:hi]
        coef = (_dloss(kind, float(np.dot(vals, z[cols])), y[i])
                - _dloss(kind, snap_margin[i], y[i]))
        if not np.isfinite(coef):
            return z, j
        z[cols] -= (eta * coef) * vals
        z -= eta * g
        _threshold_inplace(z, None, s)
    return z, 0


@_quiet
def sght_steps(indptr, indices, data, y, kind, x0, eta, samples, s):
    x = np.array(x0, dtype=np.float64, copy=True)
    for j in range(1, samples.shape[0] + 1):
        i = samples[j - 1]
        lo, hi = indptr[i], indptr[i + 1]
        cols = indices[lo:hi]
        vals = data[lo:hi]
        w = eta * _dloss(kind, float(np.dot(vals, x[cols])), y[i])
        if not np.isfinite(w):
            return x, j
        x[cols] -= w * vals
        _threshold_inplace(x, None, s)
    return x, 0
