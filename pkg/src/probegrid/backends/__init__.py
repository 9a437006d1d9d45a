"""Backend selection: compiled Cython core with a pure-NumPy fallback.

The compiled core is used when it imported cleanly; set
``PROBEGRID_BACKEND=numpy`` (or call :func:`set_backend`) to force the
fallback, e.g. for the backend benchmark.
"""

import os

from . import numpy_backend

_BACKENDS = {"numpy": numpy_backend}

try:
    from . import cython_backend
    _BACKENDS["cython"] = cython_backend
except ImportError:
    cython_backend = None

_requested = os.environ.get("PROBEGRID_BACKEND", "auto")
if _requested == "auto":
    _active = _BACKENDS.get("cython", numpy_backend)
elif _requested in _BACKENDS:
    _active = _BACKENDS[_requested]
else:
    raise ImportError(
        f"PROBEGRID_BACKEND={_requested!r} not available; "
        f"choices: {sorted(_BACKENDS)}")


def get():
    """The active backend module."""
    return _active


def name() -> str:
    return _active.NAME


def available() -> list[str]:
    return sorted(_BACKENDS)


def set_backend(which: str):
    """Switch backends (used by tests and the backend benchmark)."""
    global _active
    if which not in _BACKENDS:
        raise ValueError(f"backend {which!r} not available; have {sorted(_BACKENDS)}")
    _active = _BACKENDS[which]
    return _active
