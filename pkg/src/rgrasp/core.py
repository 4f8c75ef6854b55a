"""Vector primitives, support-set algebra and the hard-thresholding operator.

Dense vectors are 1-D float64 numpy arrays; support sets are sorted int64
arrays of distinct 0-based indices.
"""
import numpy as np

from . import kernels


class InvalidArgument(ValueError):
    """An argument is outside the operation's domain (e.g. k > d)."""


class InvalidInput(ValueError):
    """Input data is malformed, e.g. contains NaN or Inf."""


def as_vector(x):
    if type(x) is not np.ndarray or x.dtype != np.float64 or not x.flags.c_contiguous:
        x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgument(f"expected a 1-D vector, got shape {x.shape}")
    return x


def as_support(indices, d=None):
    """Normalise an iterable of indices into a sorted, duplicate-free support."""
    t = np.unique(np.asarray(indices, dtype=np.int64).ravel())
    if d is not None and t.size and (t[0] < 0 or t[-1] >= d):
        raise InvalidArgument(f"support index out of range [0, {d})")
    return t


def _check_level(k, d):
    if int(k) != k or k < 1 or k > d:
        raise InvalidArgument(f"sparsity level must satisfy 1 <= k <= d={d}, got {k}")
    return int(k)


def top_support(x, k):
    """Indices of the k largest-magnitude entries of x, sorted ascending.

    Ties in magnitude go to the lower index. Runs in expected O(d) via
    partial selection; the full vector is never sorted.
    """
    x = as_vector(x)
    k = _check_level(k, x.shape[0])
    if not np.isfinite(x).all():
        raise InvalidInput("vector contains non-finite entries")
    return kernels.select_top_fast(x, k)


def top_support_counted(x, k):
    """Like :func:`top_support` but also returns the number of comparisons made."""
    x = as_vector(x)
    k = _check_level(k, x.shape[0])
    if not np.isfinite(x).all():
        raise InvalidInput("vector contains non-finite entries")
    return kernels.select_top(x, k)


def hard_threshold(x, s):
    """Keep the s largest-magnitude entries of x and zero the rest."""
    x = as_vector(x)
    out = np.zeros_like(x)
    keep = top_support(x, s)
    out[keep] = x[keep]
    return out


def merge_supports(a, b):
    return np.union1d(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))


def restrict(x, t):
    """x on the index set t, zero elsewhere."""
    x = as_vector(x)
    out = np.zeros_like(x)
    t = np.asarray(t, dtype=np.int64)
    out[t] = x[t]
    return out


def support(x):
    return np.flatnonzero(as_vector(x)).astype(np.int64)


def l0_norm(x):
    return int(np.count_nonzero(x))
