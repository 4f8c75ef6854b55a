"""Experiment harness: config parsing, solver grids under a pass budget, metrics, CSV.

Config files are flat ``key = value`` text; ``#`` starts a comment. See the
README for the full key list. Example::

    data = synthetic
    n = 500
    d = 1000
    s_star = 50
    noise_variance = 0.01
    objective = least_squares
    s = 60
    budget = 30
    seeds = 0, 1, 2
    solvers = svrgsp, svrgsp+, svrght, sght, fght
    eta = auto
    eta.fght = 0.5
"""
import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .core import InvalidArgument, as_vector, top_support
from .data import SyntheticSpec, generate_synthetic, parse_libsvm, UNIFORM_OFFDIAG, IDENTITY
from .objectives import KINDS, LEAST_SQUARES, Objective, SparseDataset
from .solvers import (FAST, PLAIN, RESTRICTED, SOLVERS, DivergenceError, SolverConfig,
                      draw_samples, epoch_rng, run_solver, semi_stochastic_epoch)
from . import kernels

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-15
# solvers that ignore the step size
STEP_FREE = ("grasp",)
THREADS_ENV = "RGRASP_THREADS"


class ConfigError(ValueError):
    pass


class UndefinedMetric(ValueError):
    pass


# ----------------------------------------------------------------------------
# metrics


def estimation_error(x, x_star):
    """Relative l2 error ||x - x*|| / ||x*||."""
    x_star = as_vector(x_star)
    den = float(np.linalg.norm(x_star))
    if den == 0.0:
        raise UndefinedMetric("estimation error is undefined for x* = 0")
    return float(np.linalg.norm(as_vector(x) - x_star)) / den


def log_gap(value, f_star, floor=LOG_FLOOR):
    """log10(value - f_star + floor); a negative difference counts as zero."""
    return math.log10(max(value - f_star, 0.0) + floor)


def objective_gap(obj, x, f_star, floor=LOG_FLOOR):
    return log_gap(obj.loss(x), f_star, floor)


# ----------------------------------------------------------------------------
# config


@dataclass
class SolverEntry:
    name: str
    etas: list | None = None  # None: automatic grid
    J: str | None = None


@dataclass
class ExperimentConfig:
    source: object  # SyntheticSpec or a path
    objective: str = LEAST_SQUARES
    solvers: list = field(default_factory=list)
    s: int = 10
    budget: float = 30.0
    seeds: list = field(default_factory=lambda: [0])
    m: int = 6
    inner_support: str = RESTRICTED
    normalize: bool = False
    f_star: str = "auto"
    timing: bool = True
    out: str | None = None

    def __post_init__(self):
        if not self.solvers:
            raise ConfigError("at least one solver is required")
        if not math.isfinite(self.budget) or self.budget < 0:
            raise ConfigError("budget must be non-negative")
        if self.objective not in KINDS:
            raise ConfigError(f"objective must be one of {KINDS}")
        for e in self.solvers:
            if e.name not in SOLVERS:
                raise ConfigError(f"unknown solver {e.name!r}; expected one of {sorted(SOLVERS)}")


def _bool(v):
    v = v.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}")


def _list(v):
    return [p.strip() for p in v.split(",") if p.strip()]


def _etas(v):
    if v.strip().lower() == "auto":
        return None
    try:
        out = [float(p) for p in _list(v)]
    except ValueError:
        raise ConfigError(f"bad step-size list {v!r}") from None
    if not out:
        raise ConfigError("empty step-size list")
    return out


def _resolve(path, base_dir):
    # relative paths in a config file are relative to that file
    if path is None or base_dir is None or os.path.isabs(path):
        return path
    return os.path.join(base_dir, path)


def parse_config_text(text, base_dir=None):
    """Parse the flat key/value config format into an :class:`ExperimentConfig`."""
    kv = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        k, v = (p.strip() for p in line.split("=", 1))
        if k in kv:
            raise ConfigError(f"line {lineno}: duplicate key {k!r}")
        kv[k] = v

    def take(key, default=None, conv=str):
        if key not in kv:
            return default
        v = kv.pop(key)
        try:
            return conv(v)
        except (ValueError, TypeError) as e:
            raise ConfigError(f"bad value for {key!r}: {v!r} ({e})") from None

    data = take("data", "synthetic")
    if data == "synthetic":
        rho = take("rho", 0.0, float)
        cov = take("covariance", UNIFORM_OFFDIAG if rho > 0 else IDENTITY)
        try:
            source = SyntheticSpec(
                n=take("n", None, int), d=take("d", None, int), s_star=take("s_star", None, int),
                covariance=cov, rho=rho, noise_variance=take("noise_variance", 0.0, float),
                seed=take("data_seed", 0, int), task=take("task", "regression"))
        except TypeError:
            raise ConfigError("synthetic data needs n, d and s_star") from None
        except InvalidArgument as e:
            raise ConfigError(str(e)) from None
    else:
        source = _resolve(data, base_dir)

    names = _list(take("solvers", ""))
    default_etas = take("eta", None, _etas)
    default_J = take("J", None)
    entries = []
    for name in names:
        etas = take(f"eta.{name}", default_etas, _etas)
        J = take(f"J.{name}", default_J)
        entries.append(SolverEntry(name, etas, J))
    cfg = ExperimentConfig(
        source=source,
        objective=take("objective", LEAST_SQUARES),
        solvers=entries,
        s=take("s", 10, int),
        budget=take("budget", 30.0, float),
        seeds=take("seeds", [0], lambda v: [int(p) for p in _list(v)]),
        m=take("m", 6, int),
        inner_support=take("inner_support", RESTRICTED),
        normalize=take("normalize", False, _bool),
        f_star=take("f_star", "auto"),
        timing=take("timing", True, _bool),
        out=_resolve(take("out", None), base_dir),
    )
    if kv:
        raise ConfigError(f"unknown config keys: {sorted(kv)}")
    return cfg


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base_dir=os.path.dirname(os.path.abspath(path)))


def resolve_J(spec, n):
    """'2n', '0.5n', '300' or None -> an epoch length (None stays None)."""
    if spec is None or spec == "":
        return None
    spec = str(spec).strip()
    try:
        if spec.endswith("n"):
            factor = float(spec[:-1]) if spec[:-1] else 1.0
            return max(1, int(round(factor * n)))
        return int(spec)
    except ValueError:
        raise ConfigError(f"bad epoch length {spec!r}") from None


def default_eta_grid(obj, lo=-10, hi=3):
    """Powers of two 2^lo .. 2^hi divided by the crude smoothness estimate."""
    L = obj.lipschitz_estimate()
    return [2.0 ** k / L for k in range(lo, hi + 1)]


# ----------------------------------------------------------------------------
# running


@dataclass
class MetricRow:
    solver: str
    seed: int
    eta: float
    t: int
    passes: float
    seconds: float
    objective: float
    log_gap: float
    est_error: float
    ht_ops: int
    grad_evals: int
    diverged: bool = False
    best: bool = False


COLUMNS = [f.name for f in fields(MetricRow)]


def load_dataset(cfg):
    """(objective, x_star or None) for the config's data source."""
    if isinstance(cfg.source, SyntheticSpec):
        ds, truth = generate_synthetic(cfg.source)
        x_star = truth.x_star
    else:
        ds = parse_libsvm(cfg.source, normalize=cfg.normalize)
        x_star = None
    return Objective(cfg.objective, ds), x_star


def _execute(obj, name, scfg, x_star):
    try:
        _, trace = run_solver(name, obj, scfg, x_star=x_star)
    except DivergenceError as e:
        trace = e.trace
        if trace is None:
            raise
    return trace


def worker_count():
    """Worker threads for independent runs, from ``RGRASP_THREADS`` (default 1)."""
    env = os.environ.get(THREADS_ENV, "").strip()
    if not env:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None


def _fstar_cache_path(path):
    return os.fspath(path) + ".fstar.json"


def _fstar_key(cfg):
    return f"{cfg.objective}|s={cfg.s}|normalize={int(cfg.normalize)}|budget={cfg.budget:g}"


def reference_objective(obj, cfg, eta, seed=0):
    """Final objective of SVRGSP+ at step ``eta`` with ten times the pass budget."""
    scfg = SolverConfig(s=cfg.s, eta=eta, m=cfg.m, mode=FAST, seed=seed,
                        max_passes=10 * max(cfg.budget, 1.0), inner_support=cfg.inner_support)
    trace = _execute(obj, "svrgsp+", scfg, None)
    return min(r.objective for r in trace.records)


def _best_etas(results):
    """Per solver, the step size whose median final objective is lowest."""
    by = {}
    for (name, eta, seed), trace in results.items():
        final = trace.records[-1].objective if not trace.diverged else math.inf
        by.setdefault(name, {}).setdefault(eta, []).append(final)
    best = {}
    for name, grid in by.items():
        scored = [(float(np.median(v)), eta) for eta, v in grid.items()]
        scored.sort()
        if scored and math.isfinite(scored[0][0]):
            best[name] = scored[0][1]
    return best


def _resolve_fstar(obj, cfg, x_star, results, best):
    mode = str(cfg.f_star).strip().lower()
    observed = min((r.objective for tr in results.values() for r in tr.records
                    if math.isfinite(r.objective)), default=math.inf)
    if mode == "none":
        return None
    if mode != "auto":
        try:
            return float(cfg.f_star)
        except ValueError:
            raise ConfigError(f"f_star must be auto, none or a number; got {cfg.f_star!r}") from None
    cache = None
    if not isinstance(cfg.source, SyntheticSpec):
        cache = _fstar_cache_path(cfg.source)
        try:
            with open(cache, "r", encoding="utf-8") as fh:
                cached = json.load(fh).get(_fstar_key(cfg))
            if cached is not None:
                return min(float(cached), observed)
        except (OSError, ValueError):
            pass
    ref_eta = None
    for name in ("svrgsp+", "svrgsp"):
        if name in best:
            ref_eta = 0.5 * best[name]
            break
    if ref_eta is None:
        trial = {}
        for eta in default_eta_grid(obj):
            scfg = SolverConfig(s=cfg.s, eta=eta, m=cfg.m, mode=FAST, seed=0,
                                max_passes=max(cfg.budget, 1.0), inner_support=cfg.inner_support)
            trial[("svrgsp+", eta, 0)] = _execute(obj, "svrgsp+", scfg, None)
        tb = _best_etas(trial)
        ref_eta = 0.5 * tb["svrgsp+"] if "svrgsp+" in tb else default_eta_grid(obj)[0]
    ref = reference_objective(obj, cfg, ref_eta)
    if cache is not None:
        try:
            stored = {}
            if os.path.exists(cache):
                with open(cache, "r", encoding="utf-8") as fh:
                    stored = json.load(fh)
            stored[_fstar_key(cfg)] = ref
            with open(cache, "w", encoding="utf-8") as fh:
                json.dump(stored, fh, indent=1, sort_keys=True)
        except (OSError, ValueError) as e:
            logger.warning("could not cache reference objective at %s: %s", cache, e)
    return min(ref, observed)


def run_experiment(cfg, obj=None, x_star=None):
    """Run every (solver, step size, seed) combination and return the metric rows.

    Rows come out in config order of solvers, then ascending step size, then
    seed order, then iteration, whatever the worker count.
    """
    if obj is None:
        obj, x_star = load_dataset(cfg)
    if cfg.s > obj.d:
        raise ConfigError(f"s={cfg.s} exceeds the dimension d={obj.d}")
    tasks = []
    for entry in cfg.solvers:
        if entry.name in STEP_FREE:
            etas = [0.0]
        elif entry.etas is not None:
            etas = entry.etas
        else:
            etas = default_eta_grid(obj)
        J = resolve_J(entry.J, obj.n)
        for eta in sorted(etas):
            for seed in cfg.seeds:
                mode = FAST if entry.name == "svrgsp+" else PLAIN
                scfg = SolverConfig(s=cfg.s, eta=float(eta), J=J, m=cfg.m, mode=mode, seed=seed,
                                    max_passes=cfg.budget, inner_support=cfg.inner_support)
                tasks.append((entry.name, float(eta), seed, scfg))

    def work(task):
        name, eta, seed, scfg = task
        return (name, eta, seed), _execute(obj, name, scfg, x_star)

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(work, tasks))
    else:
        results = dict(map(work, tasks))

    best = _best_etas(results)
    f_star = _resolve_fstar(obj, cfg, x_star, results, best)
    rows = []
    for name, eta, seed, _ in tasks:
        trace = results[(name, eta, seed)]
        for r in trace.records:
            rows.append(MetricRow(
                solver=name, seed=seed, eta=eta, t=r.t, passes=r.passes,
                seconds=r.seconds if cfg.timing else 0.0, objective=r.objective,
                log_gap=log_gap(r.objective, f_star) if f_star is not None else math.nan,
                est_error=r.est_error, ht_ops=r.ht_ops, grad_evals=r.grad_evals,
                diverged=trace.diverged, best=best.get(name) == eta))
    return rows


# ----------------------------------------------------------------------------
# CSV


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def emit_csv(rows, path):
    """Write rows with a header line; reals carry 17 significant digits."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for row in rows:
                w.writerow([_fmt(getattr(row, c)) for c in COLUMNS])
    except OSError as e:
        raise OSError(f"cannot write CSV to {path}: {e}") from e


def read_csv(path):
    types = {f.name: f.type for f in fields(MetricRow)}
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            kw = {}
            for k, v in rec.items():
                t = types[k]
                if t in ("bool", bool):
                    kw[k] = v == "1"
                elif t in ("int", int):
                    kw[k] = int(v)
                elif t in ("float", float):
                    kw[k] = float(v)
                else:
                    kw[k] = v
            out.append(MetricRow(**kw))
    return out


def summarize(rows):
    """Final row of the best step size per (solver, seed)."""
    finals = {}
    for r in rows:
        if r.best:
            finals[(r.solver, r.seed)] = r
    return [finals[k] for k in sorted(finals, key=lambda k: (k[0], k[1]))]


# ----------------------------------------------------------------------------
# per-step cost measurement


def random_sparse_dataset(n, d, nnz_per_sample, seed=0):
    """n samples with exactly ``nnz_per_sample`` Gaussian entries at random columns."""
    rng = np.random.default_rng(seed)
    k = min(nnz_per_sample, d)
    indices = np.concatenate([np.sort(rng.choice(d, size=k, replace=False)) for _ in range(n)])
    data = rng.standard_normal(n * k)
    data[data == 0.0] = 1.0
    indptr = np.arange(0, n * k + 1, k, dtype=np.int64)
    return SparseDataset(indptr, indices, data, rng.standard_normal(n), d)


def measure_step_times(dims, n=200, nnz_per_sample=20, s=10, repeats=5, seed=0):
    """Mean wall time per inner step of a plain semi-stochastic epoch and an SVRGHT epoch.

    Returns ``{d: (svrgsp_step_seconds, svrght_step_seconds)}``. Each figure is
    the best of ``repeats`` epochs of J = 2n steps divided by J; the full
    gradient at the snapshot is computed beforehand and not timed.
    """
    out = {}
    for d in dims:
        ds = random_sparse_dataset(n, d, nnz_per_sample, seed)
        obj = Objective(LEAST_SQUARES, ds)
        rng = np.random.default_rng(seed)
        x = np.zeros(d)
        x[rng.choice(d, size=s, replace=False)] = rng.standard_normal(s)
        g, margins = obj.full_gradient(x, return_margins=True)
        T_set = np.union1d(top_support(g, min(2 * s, d)), np.flatnonzero(x))
        J = 2 * n
        eta = 0.1 / obj.lipschitz_estimate()
        cfg = SolverConfig(s=s, eta=eta, J=J, mode=PLAIN)
        samples = draw_samples(epoch_rng(seed, 1), n, J)
        best_sp = best_ht = math.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            semi_stochastic_epoch(obj, x, T_set, cfg, g=g, snap_margins=margins, samples=samples)
            best_sp = min(best_sp, time.perf_counter() - t0)
            t0 = time.perf_counter()
            kernels.svrght_epoch(ds.indptr, ds.indices, ds.data, ds.y, obj.kernel_kind, x, g,
                                 margins, eta, samples, s)
            best_ht = min(best_ht, time.perf_counter() - t0)
        out[d] = (best_sp / J, best_ht / J)
    return out
