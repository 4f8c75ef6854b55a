"""Synthetic sparse-regression instances and SVMlight/LIBSVM text I/O.

Randomness comes from numpy's PCG64 generator seeded through
``numpy.random.default_rng(seed)``; Gaussian draws use numpy's ziggurat
sampler. Draw order is fixed: support, nonzero values, design, shared
factor, noise. A given seed therefore reproduces an instance bit for bit
on one platform and numpy version.
"""
import io
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from .core import InvalidArgument
from .objectives import SparseDataset

logger = logging.getLogger(__name__)

IDENTITY = "identity"
UNIFORM_OFFDIAG = "uniform-offdiag"
REGRESSION = "regression"
CLASSIFICATION = "classification"


class ParseError(ValueError):
    """Malformed SVMlight input; ``lineno`` is 1-based."""

    def __init__(self, message, lineno=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.lineno = lineno
        self.path = path


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic sparse linear model y = W x* + noise.

    ``covariance`` is ``"identity"`` or ``"uniform-offdiag"`` (unit diagonal,
    every off-diagonal entry ``rho``). ``task="classification"`` returns
    labels sign(w_i.x* + noise) in {-1, +1} instead of real responses.
    """

    n: int
    d: int
    s_star: int
    covariance: str = IDENTITY
    rho: float = 0.0
    noise_variance: float = 0.0
    seed: int = 0
    task: str = REGRESSION

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise InvalidArgument("n and d must be positive")
        if not 1 <= self.s_star <= self.d:
            raise InvalidArgument(f"s_star must lie in [1, d], got {self.s_star}")
        if self.noise_variance < 0:
            raise InvalidArgument("noise_variance must be >= 0")
        if self.covariance not in (IDENTITY, UNIFORM_OFFDIAG):
            raise InvalidArgument(f"unknown covariance {self.covariance!r}")
        if not 0.0 <= self.rho < 1.0:
            raise InvalidArgument(f"rho must lie in [0, 1), got {self.rho}")
        if self.task not in (REGRESSION, CLASSIFICATION):
            raise InvalidArgument(f"unknown task {self.task!r}")


@dataclass(frozen=True)
class GroundTruth:
    x_star: np.ndarray
    support: np.ndarray


def generate_synthetic(spec):
    """Draw (dataset, ground truth) for ``spec``.

    Rows are i.i.d. N(0, Sigma). For the uniform off-diagonal covariance
    Sigma = (1 - rho) I + rho 11^T each row is sqrt(1 - rho) z + sqrt(rho) u 1
    with z ~ N(0, I) and a scalar u ~ N(0, 1), which costs O(d) per row.
    Nonzeros of x* are uniform on [-1, 1]; exact zeros are redrawn.
    """
    rng = np.random.default_rng(spec.seed)
    sup = np.sort(rng.choice(spec.d, size=spec.s_star, replace=False)).astype(np.int64)
    vals = rng.uniform(-1.0, 1.0, size=spec.s_star)
    while np.any(vals == 0.0):
        zero = vals == 0.0
        vals[zero] = rng.uniform(-1.0, 1.0, size=int(zero.sum()))
    x_star = np.zeros(spec.d)
    x_star[sup] = vals

    W = rng.standard_normal((spec.n, spec.d))
    rho = spec.rho if spec.covariance == UNIFORM_OFFDIAG else 0.0
    if rho > 0:
        u = rng.standard_normal(spec.n)
        W *= math.sqrt(1.0 - rho)
        W += math.sqrt(rho) * u[:, None]
    noise = rng.standard_normal(spec.n) * math.sqrt(spec.noise_variance)
    ds = SparseDataset.from_dense(W, np.zeros(spec.n))
    # same product the objective uses for margins, so F(x*) = 0 exactly without noise
    y = ds.matrix @ x_star + noise
    if spec.task == CLASSIFICATION:
        y = np.where(y >= 0, 1.0, -1.0)
    return SparseDataset(ds.indptr, ds.indices, ds.data, y, spec.d, validate=False), GroundTruth(x_star, sup)


def parse_spec_string(text):
    """Parse ``"n=500,d=1000,s_star=50,rho=0.1"`` into a :class:`SyntheticSpec`."""
    fields = {}
    for part in text.replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise InvalidArgument(f"expected key=value in synthetic spec, got {part!r}")
        k, v = (p.strip() for p in part.split("=", 1))
        fields[k] = v
    conv = {"n": int, "d": int, "s_star": int, "rho": float, "noise_variance": float,
            "seed": int, "covariance": str, "task": str}
    unknown = set(fields) - set(conv)
    if unknown:
        raise InvalidArgument(f"unknown synthetic spec keys: {sorted(unknown)}")
    kw = {k: conv[k](v) for k, v in fields.items()}
    if "rho" in kw and kw["rho"] > 0 and "covariance" not in kw:
        kw["covariance"] = UNIFORM_OFFDIAG
    return SyntheticSpec(**kw)


# ----------------------------------------------------------------------------
# SVMlight / LIBSVM text format

_HEADER = "# n_features:"


def _parse_lines(lines, path=None):
    labels, indptr, indices, data = [], [0], [], []
    header_d = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw
        hash_pos = line.find("#")
        if hash_pos >= 0:
            comment = line[hash_pos:]
            if comment.startswith(_HEADER) and not line[:hash_pos].strip():
                try:
                    header_d = int(comment[len(_HEADER):].strip())
                except ValueError:
                    raise ParseError(f"bad n_features header {comment.strip()!r}", lineno, path) from None
            line = line[:hash_pos]
        tokens = line.split()
        if not tokens:
            continue
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(f"bad label {tokens[0]!r}", lineno, path) from None
        if not math.isfinite(label):
            raise ParseError(f"non-finite label {tokens[0]!r}", lineno, path)
        prev = 0
        for tok in tokens[1:]:
            key, sep, val = tok.partition(":")
            if not sep:
                raise ParseError(f"expected index:value, got {tok!r}", lineno, path)
            if key == "qid":
                continue
            try:
                j = int(key)
                v = float(val)
            except ValueError:
                raise ParseError(f"bad feature {tok!r}", lineno, path) from None
            if j < 1:
                raise ParseError(f"feature index {j} is not 1-based positive", lineno, path)
            if j <= prev:
                raise ParseError(f"feature indices not strictly increasing at {tok!r}", lineno, path)
            if not math.isfinite(v):
                raise ParseError(f"non-finite value in {tok!r}", lineno, path)
            prev = j
            if v != 0.0:
                indices.append(j - 1)
                data.append(v)
        labels.append(label)
        indptr.append(len(indices))
    return labels, indptr, indices, data, header_d


def parse_libsvm(source, d=None, binary=None, normalize=False):
    """Read an SVMlight/LIBSVM text file (path or open text stream).

    Parameters
    ----------
    d : int, optional
        Feature dimension. Defaults to the ``# n_features: d`` header when
        present, else the largest index seen.
    binary : bool, optional
        Map two-valued labels to -1/+1 (smaller value -> -1). ``None`` does
        so whenever the file has at most two distinct labels.
    normalize : bool
        Scale every sample to unit Euclidean norm.
    """
    path = None
    if isinstance(source, (str, os.PathLike)):
        path = os.fspath(source)
        with open(path, "r", encoding="utf-8") as fh:
            parsed = _parse_lines(fh, path)
    else:
        parsed = _parse_lines(source)
    labels, indptr, indices, data, header_d = parsed
    if not labels:
        raise ParseError("no samples found (empty file)", path=path)
    max_idx = max(indices) + 1 if indices else 0
    if d is None:
        d = header_d if header_d is not None else max_idx
    if d < max_idx:
        raise ParseError(f"feature index {max_idx} exceeds declared dimension {d}", path=path)
    y = np.asarray(labels, dtype=np.float64)
    distinct = np.unique(y)
    if binary is None:
        binary = distinct.size <= 2
    if binary:
        if distinct.size > 2:
            raise ParseError(f"binary labels requested but found {distinct.size} distinct values",
                             path=path)
        if distinct.size == 2:
            y = np.where(y == distinct[1], 1.0, -1.0)
        elif distinct[0] not in (-1.0, 1.0):
            y = np.where(y > 0, 1.0, -1.0)
    ds = SparseDataset(np.asarray(indptr, dtype=np.int64), np.asarray(indices, dtype=np.int64),
                       np.asarray(data, dtype=np.float64), y, d)
    if normalize:
        ds = normalize_samples(ds)
    logger.debug("parsed %s: n=%d d=%d nnz=%d", path or "<stream>", ds.n, ds.d, ds.nnz)
    return ds


def normalize_samples(ds):
    norms = np.sqrt(ds.row_sq_norms())
    scale = np.repeat(np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 1.0),
                      np.diff(ds.indptr))
    return SparseDataset(ds.indptr, ds.indices, ds.data * scale, ds.y, ds.d)


def _fmt(v):
    # repr is the shortest string that round-trips a float64
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(float(v))


def write_libsvm(ds, target, header=True):
    """Write ``ds`` in SVMlight format (1-based indices, round-trip exact values)."""
    own = isinstance(target, (str, os.PathLike))
    fh = open(target, "w", encoding="utf-8") if own else target
    try:
        if header:
            fh.write(f"{_HEADER} {ds.d}\n")
        for i in range(ds.n):
            lo, hi = ds.indptr[i], ds.indptr[i + 1]
            feats = " ".join(f"{j + 1}:{_fmt(v)}" for j, v in zip(ds.indices[lo:hi].tolist(),
                                                               ds.data[lo:hi].tolist()))
            label = _fmt(ds.y[i])
            if ds.y[i] == 1.0:
                label = "+1"
            fh.write(f"{label} {feats}\n" if feats else f"{label}\n")
    except OSError as e:
        raise OSError(f"failed writing {target}: {e}") from e
    finally:
        if own:
            fh.close()


def dumps_libsvm(ds, header=True):
    buf = io.StringIO()
    write_libsvm(ds, buf, header=header)
    return buf.getvalue()


@dataclass(frozen=True)
class DatasetStats:
    n: int
    d: int
    nnz: int
    density: float


def dataset_stats(ds):
    if ds is None or ds.n == 0 or ds.d == 0:
        return DatasetStats(0, 0, 0, 0.0)
    return DatasetStats(ds.n, ds.d, ds.nnz, ds.nnz / (ds.n * ds.d))
