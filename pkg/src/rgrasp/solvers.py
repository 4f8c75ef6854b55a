"""Support-pursuit framework, semi-stochastic inner solver and hard-thresholding baselines.

Every ``*_run`` function takes an :class:`~rgrasp.objectives.Objective`, a
:class:`SolverConfig` and an optional start point, and returns the final
iterate together with a :class:`RunTrace` holding one record per outer
iteration (record 0 is the start point).

Work accounting: one full gradient costs one effective pass, one component
gradient costs 1/n. A semi-stochastic step evaluates two component gradients
and is charged 2/n even though the snapshot side is read from cached margins.
"""
import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .core import (InvalidArgument, as_support, as_vector, hard_threshold, l0_norm,
                   merge_supports, restrict, support, top_support)
from .objectives import LEAST_SQUARES

PLAIN = "plain"
FAST = "fast"
RESTRICTED = "restricted"
FULL = "full"

DIVERGENCE_FACTOR = 1e6


class DivergenceError(RuntimeError):
    """An iterate became non-finite or the objective blew up.

    ``trace`` holds the records gathered before the failure and ``step``
    the iteration (inner step for epoch kernels) at which it was detected.
    """

    def __init__(self, message, step=None, trace=None):
        super().__init__(message)
        self.step = step
        self.trace = trace


@dataclass(frozen=True)
class SolverConfig:
    """Hyper-parameters shared by every solver.

    ``J=None`` means an epoch of 2n steps for the variance-reduced solvers and
    n steps per trace record for SG-HT. ``inner_support`` selects whether the
    semi-stochastic iterate is confined to the merged support (``restricted``)
    or left free on all d coordinates until the epoch ends (``full``).
    """

    s: int
    eta: float
    J: int | None = None
    m: int = 6
    T_outer: int | None = None
    mode: str = PLAIN
    seed: int = 0
    c1: float | None = None
    max_passes: float | None = None
    inner_support: str = RESTRICTED

    def __post_init__(self):
        if int(self.s) != self.s or self.s < 1:
            raise InvalidArgument(f"s must be a positive integer, got {self.s}")
        if not np.isfinite(self.eta) or self.eta < 0:
            raise InvalidArgument(f"step size must be finite and non-negative, got {self.eta}")
        if self.J is not None and self.J < 0:
            raise InvalidArgument(f"J must be non-negative, got {self.J}")
        if self.m < 1:
            raise InvalidArgument(f"m must be >= 1, got {self.m}")
        if self.J and self.m > self.J:
            raise InvalidArgument(f"m={self.m} exceeds the epoch length J={self.J}")
        if self.mode not in (PLAIN, FAST):
            raise InvalidArgument(f"mode must be 'plain' or 'fast', got {self.mode!r}")
        if self.inner_support not in (RESTRICTED, FULL):
            raise InvalidArgument(f"inner_support must be 'restricted' or 'full', got {self.inner_support!r}")
        if self.c1 is not None and not 0 < self.c1 < 1:
            raise InvalidArgument(f"c1 must lie in (0, 1), got {self.c1}")
        if self.T_outer is not None and self.T_outer < 0:
            raise InvalidArgument(f"T_outer must be non-negative, got {self.T_outer}")
        if self.max_passes is not None and self.max_passes < 0:
            raise InvalidArgument(f"max_passes must be non-negative, got {self.max_passes}")

    def epoch_length(self, n):
        return 2 * n if self.J is None else int(self.J)

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass
class Work:
    passes: float = 0.0
    ht_ops: int = 0
    grad_evals: int = 0


@dataclass(frozen=True)
class TraceRecord:
    t: int
    objective: float
    est_error: float
    passes: float
    seconds: float
    ht_ops: int
    grad_evals: int
    nnz: int


@dataclass
class RunTrace:
    records: list = field(default_factory=list)
    diverged: bool = False
    message: str = ""

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def final(self):
        return self.records[-1]

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def numeric_equal(self, other):
        """Equality ignoring wall-clock time."""
        if len(self) != len(other) or self.diverged != other.diverged:
            return False
        for a, b in zip(self.records, other.records):
            if replace(a, seconds=0.0) != replace(b, seconds=0.0):
                return False
        return True


class _Run:
    """Per-run bookkeeping: work counters, compute-only clock, trace, divergence guard."""

    def __init__(self, obj, cfg, x_star):
        self.obj = obj
        self.cfg = cfg
        self.x_star = None if x_star is None else as_vector(x_star)
        self.work = Work()
        self.trace = RunTrace()
        self._seconds = 0.0
        self._f0 = None
        self.last_cost = None

    def timed(self):
        return _Timer(self)

    def record(self, t, x):
        with np.errstate(over="ignore", invalid="ignore"):
            f = self.obj.loss(x)
        if self.x_star is not None:
            err = float(np.linalg.norm(x - self.x_star) / np.linalg.norm(self.x_star))
        else:
            err = float("nan")
        self.trace.records.append(TraceRecord(
            t=t, objective=f, est_error=err, passes=self.work.passes, seconds=self._seconds,
            ht_ops=self.work.ht_ops, grad_evals=self.work.grad_evals, nnz=l0_norm(x)))
        if self._f0 is None:
            self._f0 = f
        elif not np.isfinite(f) or not np.all(np.isfinite(x)) or (
                self._f0 > 0 and f > DIVERGENCE_FACTOR * self._f0):
            self.fail(f"objective diverged at iteration {t} (F={f:.3e})", t)

    def fail(self, message, step):
        self.trace.diverged = True
        self.trace.message = message
        raise DivergenceError(message, step=step, trace=self.trace)

    def iterations(self, cost):
        """Yield t = 1, 2, ... while the iteration cap and pass budget allow.

        ``cost`` is the planned pass cost of one iteration, or None when it is
        only known afterwards (the last observed cost is then used).
        """
        cap, budget = self.cfg.T_outer, self.cfg.max_passes
        if cap is None and budget is None:
            raise InvalidArgument("set T_outer or max_passes to bound the run")
        t = 0
        while cap is None or t < cap:
            if budget is not None:
                planned = cost if cost is not None else (self.last_cost or 1.0)
                if self.work.passes + planned > budget + 1e-9:
                    return
            t += 1
            before = self.work.passes
            yield t
            self.last_cost = self.work.passes - before


class _Timer:
    def __init__(self, run):
        self.run = run

    def __enter__(self):
        self._t = time.perf_counter()

    def __exit__(self, *exc):
        self.run._seconds += time.perf_counter() - self._t
        return False


def epoch_rng(seed, t):
    """Independent, reproducible stream for epoch t of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(t),)))


def draw_samples(rng, n, J):
    return rng.integers(0, n, size=J, dtype=np.int64)


def _start(obj, cfg, x0):
    if cfg.s > obj.d:
        raise InvalidArgument(f"s={cfg.s} exceeds the dimension d={obj.d}")
    x = np.zeros(obj.d) if x0 is None else as_vector(x0).copy()
    if x.shape[0] != obj.d:
        raise InvalidArgument(f"x0 has dimension {x.shape[0]}, objective has d={obj.d}")
    if l0_norm(x) > cfg.s:
        raise InvalidArgument(f"x0 has {l0_norm(x)} nonzeros, more than s={cfg.s}")
    return x


# ----------------------------------------------------------------------------
# inner solvers


def semi_stochastic_epoch(obj, x_start, T_set, cfg, g=None, snap_margins=None,
                          samples=None, work=None):
    """One epoch of semi-stochastic gradient steps from ``x_start``.

    Each step draws a sample i uniformly with replacement and moves along
    grad f_i(z) - grad f_i(x_start) + g, where g is the full gradient at the
    (fixed) snapshot ``x_start``. In fast mode the iterate is hard-thresholded
    to |T_set| entries every ceil(J/m) steps. Returns the last iterate b;
    zeroing b outside T_set is left to the caller.

    Parameters
    ----------
    g, snap_margins : ndarray, optional
        Full gradient and margins w_i.x_start; computed (and charged one pass)
        when omitted.
    samples : ndarray of int, optional
        The J sample indices; drawn from ``epoch_rng(cfg.seed, 0)`` when omitted.
    work : Work, optional
        Counters to charge.
    """
    x_start = as_vector(x_start)
    T_set = as_support(T_set, obj.d)
    work = Work() if work is None else work
    if g is None or snap_margins is None:
        g, snap_margins = obj.full_gradient(x_start, return_margins=True)
        work.passes += 1.0
        work.grad_evals += obj.n
    J = cfg.epoch_length(obj.n) if samples is None else len(samples)
    if J == 0:
        return x_start.copy()
    if samples is None:
        samples = draw_samples(epoch_rng(cfg.seed, 0), obj.n, J)
    period = math.ceil(J / cfg.m) if cfg.mode == FAST else 0
    ds = obj.dataset
    z, ht, fail = kernels.svrg_epoch(
        ds.indptr, ds.indices, ds.data, ds.y, obj.kernel_kind, x_start,
        np.ascontiguousarray(g, dtype=np.float64),
        np.ascontiguousarray(snap_margins, dtype=np.float64),
        T_set, float(cfg.eta), np.ascontiguousarray(samples, dtype=np.int64),
        period, T_set.shape[0], cfg.inner_support == RESTRICTED)
    work.passes += 2.0 * J / obj.n
    work.grad_evals += 2 * J
    work.ht_ops += ht
    if fail:
        raise DivergenceError(f"semi-stochastic epoch diverged at inner step {fail}", step=fail)
    return z


@dataclass
class RestrictedResult:
    x: np.ndarray
    converged: bool
    singular: bool = False
    iterations: int = 0
    passes: float = 0.0
    grad_norm: float = 0.0


def restricted_minimize(obj, T_set, x_start=None, tol=1e-8, max_iter=2000):
    """Minimise F over vectors supported on ``T_set``.

    Least squares solves the restricted normal equations (minimum-norm
    solution when they are singular). Logistic regression runs gradient
    descent with backtracking from ``x_start`` until the restricted gradient
    norm drops to ``tol`` or ``max_iter`` is hit.
    """
    T_set = as_support(T_set, obj.d)
    out = np.zeros(obj.d)
    if T_set.size == 0:
        return RestrictedResult(out, converged=True)
    A = obj.dataset.matrix.tocsc()[:, T_set].tocsr()
    n = max(obj.n, 1)
    y = obj.dataset.y
    if obj.kind == LEAST_SQUARES:
        G = (A.T @ A).toarray() / n
        r = A.T @ y / n
        v, _, rank, _ = np.linalg.lstsq(G, r, rcond=None)
        gn = float(np.linalg.norm(G @ v - r))
        out[T_set] = v
        return RestrictedResult(out, converged=gn <= tol, singular=rank < T_set.size,
                                iterations=1, passes=1.0, grad_norm=gn)

    v = np.zeros(T_set.size) if x_start is None else as_vector(x_start)[T_set].copy()
    passes = 0.0

    def value_grad(v):
        m = A @ v
        return float(np.mean(obj.losses_from_margins(m))), A.T @ obj.dloss(m) / n

    f, gr = value_grad(v)
    passes += 1.0
    step = 1.0
    gn = float(np.linalg.norm(gr))
    it = 0
    while gn > tol and it < max_iter:
        it += 1
        gg = gn * gn
        while True:
            cand = v - step * gr
            fc = float(np.mean(obj.losses_from_margins(A @ cand)))
            passes += 1.0
            if fc <= f - 0.5 * step * gg or step < 1e-20:
                break
            step *= 0.5
        v = cand
        f, gr = value_grad(v)
        passes += 1.0
        gn = float(np.linalg.norm(gr))
        step *= 2.0
    out[T_set] = v
    return RestrictedResult(out, converged=gn <= tol, iterations=it, passes=passes, grad_norm=gn)


def descent_ratio(b, b_hat, x_prev):
    """||b - b_hat|| / ||x_prev - b_hat|| (0 when both are zero)."""
    num = float(np.linalg.norm(as_vector(b) - as_vector(b_hat)))
    den = float(np.linalg.norm(as_vector(x_prev) - as_vector(b_hat)))
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def audit_descent(b, b_hat, x_prev, c1):
    """Whether ||b - b_hat|| <= c1 ||x_prev - b_hat|| holds."""
    num = float(np.linalg.norm(as_vector(b) - as_vector(b_hat)))
    return num <= c1 * float(np.linalg.norm(as_vector(x_prev) - as_vector(b_hat)))


class SemiStochasticInner:
    """Inner solver running one semi-stochastic epoch per outer iteration."""

    def __init__(self, cfg):
        self.cfg = cfg

    def pass_cost(self, obj):
        return 2.0 * self.cfg.epoch_length(obj.n) / obj.n

    def __call__(self, obj, x_prev, T_set, g, margins, t, work):
        J = self.cfg.epoch_length(obj.n)
        samples = draw_samples(epoch_rng(self.cfg.seed, t), obj.n, J)
        return semi_stochastic_epoch(obj, x_prev, T_set, self.cfg, g=g, snap_margins=margins,
                                     samples=samples, work=work)


class ExactInner:
    """Inner solver returning the restricted minimiser (GraSP / CoSaMP)."""

    def __init__(self, tol=1e-8, max_iter=2000):
        self.tol = tol
        self.max_iter = max_iter
        self.flags = []

    def pass_cost(self, obj):
        return 1.0 if obj.kind == LEAST_SQUARES else None

    def __call__(self, obj, x_prev, T_set, g, margins, t, work):
        res = restricted_minimize(obj, T_set, x_prev, tol=self.tol, max_iter=self.max_iter)
        work.passes += res.passes
        work.grad_evals += int(round(res.passes * obj.n))
        self.flags.append((res.converged, res.singular))
        return res.x


# ----------------------------------------------------------------------------
# framework


def rgrasp_run(obj, cfg, inner="svrg", x0=None, x_star=None, callback=None):
    """Relaxed gradient support pursuit.

    Each outer iteration takes the gradient at the current estimate, merges
    the 2s strongest gradient coordinates with the current support into T,
    asks ``inner`` for an approximate minimiser of F over T, zeroes it off T
    and keeps its s largest entries.

    ``inner`` is ``"svrg"`` (semi-stochastic epoch, plain or fast per
    ``cfg.mode``), ``"exact"`` (restricted minimiser), or any callable
    ``inner(obj, x_prev, T, g, margins, t, work) -> b``. ``callback(t, x, T,
    b)`` is invoked after each outer iteration.
    """
    if inner == "svrg":
        inner = SemiStochasticInner(cfg)
    elif inner == "exact":
        inner = ExactInner()
    run = _Run(obj, cfg, x_star)
    x = _start(obj, cfg, x0)
    s = cfg.s
    width = 2 * s
    if width > obj.d:
        warnings.warn(f"2s={width} exceeds d={obj.d}; selecting all {obj.d} gradient coordinates",
                      RuntimeWarning, stacklevel=2)
        width = obj.d
    run.record(0, x)
    cost = getattr(inner, "pass_cost", lambda o: None)(obj)
    if cost is not None:
        cost += 1.0
    for t in run.iterations(cost):
        with run.timed():
            g, margins = obj.full_gradient(x, return_margins=True)
            run.work.passes += 1.0
            run.work.grad_evals += obj.n
            Z = top_support(g, width)
            T_set = merge_supports(Z, support(x))
            try:
                b = inner(obj, x, T_set, g, margins, t, run.work)
            except DivergenceError as e:
                run.fail(f"inner solver diverged at outer iteration {t}: {e}", t)
            b = restrict(b, T_set)
            x = hard_threshold(b, s)
            run.work.ht_ops += 1
        if callback is not None:
            callback(t, x, T_set, b)
        run.record(t, x)
    return x, run.trace


def svrgsp_run(obj, cfg, x0=None, x_star=None, callback=None):
    """RGraSP with the semi-stochastic inner solver (plain or fast per cfg.mode)."""
    return rgrasp_run(obj, cfg, "svrg", x0=x0, x_star=x_star, callback=callback)


def grasp_run(obj, cfg, x0=None, x_star=None, tol=1e-8, callback=None):
    """GraSP: the framework with the exact restricted minimiser as inner solver."""
    return rgrasp_run(obj, cfg, ExactInner(tol=tol), x0=x0, x_star=x_star, callback=callback)


# ----------------------------------------------------------------------------
# baselines


def fght_run(obj, cfg, x0=None, x_star=None):
    """Projected gradient descent: x <- H_s(x - eta grad F(x))."""
    run = _Run(obj, cfg, x_star)
    x = _start(obj, cfg, x0)
    run.record(0, x)
    for t in run.iterations(1.0):
        with run.timed():
            g = obj.full_gradient(x)
            run.work.passes += 1.0
            run.work.grad_evals += obj.n
            x = hard_threshold(x - cfg.eta * g, cfg.s)
            run.work.ht_ops += 1
        run.record(t, x)
    return x, run.trace


def sght_run(obj, cfg, x0=None, x_star=None):
    """Stochastic gradient hard thresholding; one trace record per J steps (default n)."""
    run = _Run(obj, cfg, x_star)
    x = _start(obj, cfg, x0)
    J = obj.n if cfg.J is None else int(cfg.J)
    ds = obj.dataset
    run.record(0, x)
    for t in run.iterations(J / obj.n):
        with run.timed():
            samples = draw_samples(epoch_rng(cfg.seed, t), obj.n, J)
            x, fail = kernels.sght_steps(ds.indptr, ds.indices, ds.data, ds.y, obj.kernel_kind,
                                         x, float(cfg.eta), samples, cfg.s)
            run.work.passes += J / obj.n
            run.work.grad_evals += J
            run.work.ht_ops += J
        if fail:
            run.fail(f"SG-HT diverged at step {fail} of block {t}", t)
        run.record(t, x)
    return x, run.trace


def svrght_run(obj, cfg, x0=None, x_star=None):
    """Variance-reduced gradient hard thresholding.

    Every epoch takes a full gradient at the snapshot, runs J steps each
    followed by H_s, and forms the next snapshot as H_s of the last iterate;
    an epoch therefore performs J + 1 hard thresholds.
    """
    run = _Run(obj, cfg, x_star)
    x = _start(obj, cfg, x0)
    J = cfg.epoch_length(obj.n)
    ds = obj.dataset
    run.record(0, x)
    for t in run.iterations(1.0 + 2.0 * J / obj.n):
        with run.timed():
            g, margins = obj.full_gradient(x, return_margins=True)
            run.work.passes += 1.0
            run.work.grad_evals += obj.n
            samples = draw_samples(epoch_rng(cfg.seed, t), obj.n, J)
            z, fail = kernels.svrght_epoch(ds.indptr, ds.indices, ds.data, ds.y, obj.kernel_kind,
                                           x, g, margins, float(cfg.eta), samples, cfg.s)
            run.work.passes += 2.0 * J / obj.n
            run.work.grad_evals += 2 * J
            run.work.ht_ops += J
        if fail:
            run.fail(f"SVRGHT diverged at inner step {fail} of epoch {t}", t)
        with run.timed():
            x = hard_threshold(z, cfg.s)
            run.work.ht_ops += 1
        run.record(t, x)
    return x, run.trace


def _svrgsp_plus(obj, cfg, x0=None, x_star=None):
    return rgrasp_run(obj, cfg.with_(mode=FAST), "svrg", x0=x0, x_star=x_star)


def _svrgsp_plain(obj, cfg, x0=None, x_star=None):
    return rgrasp_run(obj, cfg.with_(mode=PLAIN), "svrg", x0=x0, x_star=x_star)


SOLVERS = {
    "svrgsp": _svrgsp_plain,
    "svrgsp+": _svrgsp_plus,
    "svrght": svrght_run,
    "sght": sght_run,
    "fght": fght_run,
    "grasp": grasp_run,
}


def run_solver(name, obj, cfg, x0=None, x_star=None):
    try:
        fn = SOLVERS[name]
    except KeyError:
        raise InvalidArgument(f"unknown solver {name!r}; expected one of {sorted(SOLVERS)}") from None
    return fn(obj, cfg, x0=x0, x_star=x_star)
