"""Backend selection for the hot loops.

The compiled extension ``rgrasp._kernels`` is used when it imports; otherwise
the numpy implementation in ``rgrasp._fallback`` takes over. ``set_backend``
switches between them at run time.
"""
import contextlib
import logging

from . import _fallback

logger = logging.getLogger(__name__)

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _fallback}
if _compiled is not None:
    _BACKENDS["cython"] = _compiled

_active = _fallback if _compiled is None else _compiled

LEAST_SQUARES = _fallback.LEAST_SQUARES
LOGISTIC = _fallback.LOGISTIC


def available_backends():
    return sorted(_BACKENDS)


def backend_name():
    return "cython" if _active is _compiled and _compiled is not None else "python"


def set_backend(name):
    """Switch the process-wide backend; returns the previous name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {available_backends()}")
    prev = backend_name()
    _active = _BACKENDS[name]
    return prev


@contextlib.contextmanager
def using_backend(name):
    prev = set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


def get_backend(name=None):
    """The kernel module for ``name`` (default: the active one)."""
    return _active if name is None else _BACKENDS[name]


def select_top(x, k):
    return _active.select_top(x, k)


def select_top_fast(x, k):
    return _active.select_top_fast(x, k)


def sparse_dot(indices, values, x):
    return _active.sparse_dot(indices, values, x)


def svrg_epoch(*args):
    return _active.svrg_epoch(*args)


def svrght_epoch(*args):
    return _active.svrght_epoch(*args)


def sght_steps(*args):
    return _active.sght_steps(*args)
