"""Sparse-constrained finite-sum minimisation with relaxed gradient support pursuit."""
from .core import (InvalidArgument, InvalidInput, hard_threshold, l0_norm, merge_supports,
                   restrict, support, top_support, top_support_counted)
from .objectives import LEAST_SQUARES, LOGISTIC, Objective, SparseDataset
from .solvers import (FAST, FULL, PLAIN, RESTRICTED, SOLVERS, DivergenceError, ExactInner,
                      RunTrace, SemiStochasticInner, SolverConfig, TraceRecord, fght_run, grasp_run,
                      restricted_minimize, rgrasp_run, run_solver, semi_stochastic_epoch, sght_run,
                      svrght_run, svrgsp_run)
from .data import (GroundTruth, ParseError, SyntheticSpec, dataset_stats, generate_synthetic,
                   parse_libsvm, write_libsvm)
from .kernels import available_backends, backend_name, set_backend, using_backend

__version__ = "0.1.0"

__all__ = [
    "InvalidArgument", "InvalidInput", "hard_threshold", "l0_norm", "merge_supports", "restrict",
    "support", "top_support", "top_support_counted",
    "LEAST_SQUARES", "LOGISTIC", "Objective", "SparseDataset",
    "FAST", "FULL", "PLAIN", "RESTRICTED", "SOLVERS", "DivergenceError", "ExactInner", "RunTrace",
    "SemiStochasticInner", "SolverConfig", "TraceRecord", "fght_run", "grasp_run",
    "restricted_minimize", "rgrasp_run", "run_solver", "semi_stochastic_epoch", "sght_run",
    "svrght_run", "svrgsp_run",
    "GroundTruth", "ParseError", "SyntheticSpec", "dataset_stats", "generate_synthetic",
    "parse_libsvm", "write_libsvm",
    "available_backends", "backend_name", "set_backend", "using_backend",
]
