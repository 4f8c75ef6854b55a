"""Finite-sum least-squares and logistic objectives over sparse samples.

``F(x) = (1/n) sum_i f_i(x)`` with ``f_i(x) = 1/2 (y_i - w_i.x)^2`` for least
squares and ``f_i(x) = log(1 + exp(-y_i w_i.x))`` for logistic regression.
Samples w_i are stored row-wise in CSR form (one row per sample).
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import kernels
from .core import InvalidArgument, InvalidInput, as_vector

LEAST_SQUARES = "least_squares"
LOGISTIC = "logistic"
KINDS = (LEAST_SQUARES, LOGISTIC)

# set by the test suite to assert gradient sparsity on every call
DEBUG_CHECKS = False


@dataclass(frozen=True, eq=False)
class SparseDataset:
    """n samples of dimension d in CSR layout plus the response vector y."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    y: np.ndarray
    d: int
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        for name, arr in (("indptr", indptr), ("indices", indices), ("data", data), ("y", y)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "d", int(self.d))
        if self.validate:
            self._check()

    def _check(self):
        n = self.y.shape[0]
        if self.indptr.shape != (n + 1,) or self.indptr[0] != 0:
            raise InvalidInput("indptr must have length n + 1 and start at 0")
        if np.any(np.diff(self.indptr) < 0) or self.indptr[-1] != self.indices.shape[0]:
            raise InvalidInput("indptr must be non-decreasing and end at nnz")
        if self.indices.shape != self.data.shape:
            raise InvalidInput("indices and data lengths differ")
        if self.indices.size:
            if self.indices.min() < 0 or self.indices.max() >= self.d:
                raise InvalidInput(f"feature index out of range [0, {self.d})")
            steps = np.diff(self.indices)
            row_start = np.zeros(self.indices.shape[0], dtype=bool)
            row_start[self.indptr[:-1][np.diff(self.indptr) > 0]] = True
            if np.any(steps[~row_start[1:]] <= 0):
                raise InvalidInput("indices within a sample must be strictly increasing")
        if not np.all(np.isfinite(self.data)) or np.any(self.data == 0):
            raise InvalidInput("stored values must be finite and nonzero")
        if not np.all(np.isfinite(self.y)):
            raise InvalidInput("responses must be finite")

    @classmethod
    def from_dense(cls, W, y):
        """Build from an n x d array (one sample per row); exact zeros are dropped."""
        m = sp.csr_matrix(np.asarray(W, dtype=np.float64))
        m.sort_indices()
        return cls(m.indptr, m.indices, m.data, y, m.shape[1])

    @classmethod
    def from_scipy(cls, m, y):
        m = sp.csr_matrix(m, dtype=np.float64)
        m.eliminate_zeros()
        m.sort_indices()
        return cls(m.indptr, m.indices, m.data, y, m.shape[1])

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def nnz(self):
        return self.indices.shape[0]

    @cached_property
    def matrix(self):
        """The n x d sample matrix as scipy CSR (shares memory)."""
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.d))

    def column(self, i):
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def to_dense(self):
        return self.matrix.toarray()

    def row_sq_norms(self):
        return np.asarray(self.matrix.multiply(self.matrix).sum(axis=1)).ravel()

    def equals(self, other):
        return (self.d == other.d
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.data, other.data)
                and np.array_equal(self.y, other.y))


def inner_product(indices, values, x):
    """Dot product of a sparse vector (index/value pairs) with a dense vector."""
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    if indices.size == 0:
        return 0.0
    return kernels.sparse_dot(indices, np.ascontiguousarray(values, dtype=np.float64),
                              np.ascontiguousarray(x, dtype=np.float64))


def _log1pexp_neg(t):
    # log(1 + exp(-t)) without overflow
    return np.maximum(-t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def _sigmoid_neg(t):
    # 1 / (1 + exp(t)), stable for large |t|
    e = np.exp(-np.abs(t))
    return np.where(t > 0, e / (1.0 + e), 1.0 / (1.0 + e))


class Objective:
    """A finite-sum objective over a :class:`SparseDataset`.

    Parameters
    ----------
    kind : {"least_squares", "logistic"}
    dataset : SparseDataset
        For logistic objectives every label must be -1 or +1.
    """

    def __init__(self, kind, dataset):
        if kind not in KINDS:
            raise InvalidArgument(f"unknown objective kind {kind!r}; expected one of {KINDS}")
        if kind == LOGISTIC and not np.all(np.isin(dataset.y, (-1.0, 1.0))):
            raise InvalidInput("logistic objective needs labels in {-1, +1}")
        self.kind = kind
        self.dataset = dataset
        self.kernel_kind = kernels.LEAST_SQUARES if kind == LEAST_SQUARES else kernels.LOGISTIC

    def __repr__(self):
        return f"Objective({self.kind!r}, n={self.n}, d={self.d})"

    @property
    def n(self):
        return self.dataset.n

    @property
    def d(self):
        return self.dataset.d

    def _x(self, x):
        x = as_vector(x)
        if x.shape[0] != self.d:
            raise InvalidArgument(f"x has dimension {x.shape[0]}, objective has d={self.d}")
        return x

    def margins(self, x):
        """w_i.x for every sample."""
        return self.dataset.matrix @ self._x(x)

    def losses_from_margins(self, m):
        y = self.dataset.y
        if self.kind == LEAST_SQUARES:
            return 0.5 * (y - m) ** 2
        return _log1pexp_neg(y * m)

    def dloss(self, m):
        """Derivative of each f_i with respect to its margin."""
        y = self.dataset.y
        if self.kind == LEAST_SQUARES:
            return m - y
        return -y * _sigmoid_neg(y * m)

    def loss(self, x):
        return float(np.mean(self.losses_from_margins(self.margins(x)))) if self.n else 0.0

    def component_loss(self, i, x):
        self._check_index(i)
        m = inner_product(*self.dataset.column(i), self._x(x))
        return float(self.losses_from_margins_at(i, m))

    def losses_from_margins_at(self, i, m):
        y = self.dataset.y[i]
        if self.kind == LEAST_SQUARES:
            return 0.5 * (y - m) ** 2
        return _log1pexp_neg(y * m)

    def _check_index(self, i):
        if int(i) != i or not 0 <= i < self.n:
            raise InvalidArgument(f"sample index {i} out of range [0, {self.n})")

    def component_gradient_sparse(self, i, x):
        """Gradient of f_i as (indices, values) over the support of w_i (not averaged)."""
        self._check_index(i)
        x = self._x(x)
        idx, vals = self.dataset.column(i)
        m = inner_product(idx, vals, x)
        coef = float(self.dloss_at(i, m))
        return idx, coef * vals

    def dloss_at(self, i, m):
        y = self.dataset.y[i]
        if self.kind == LEAST_SQUARES:
            return m - y
        return -y * _sigmoid_neg(y * m)

    def component_gradient(self, i, x):
        idx, vals = self.component_gradient_sparse(i, x)
        out = np.zeros(self.d)
        out[idx] = vals
        if DEBUG_CHECKS:
            assert np.all(np.isin(np.flatnonzero(out), idx)), "gradient escaped column support"
        return out

    def full_gradient(self, x, return_margins=False):
        """(1/n) sum_i grad f_i(x); optionally also the margins w_i.x."""
        m = self.margins(x)
        coef = self.dloss(m)
        g = self.dataset.matrix.T @ coef / max(self.n, 1)
        return (g, m) if return_margins else g

    def lipschitz_estimate(self):
        """Crude per-sample smoothness bound: max ||w_i||^2 (quartered for logistic)."""
        L = float(self.dataset.row_sq_norms().max()) if self.n else 1.0
        return L if self.kind == LEAST_SQUARES else 0.25 * L
