"""Sweep kernel backends: compiled extension with pure-Python fallback.

The compiled module is preferred when importable; set the environment
variable SPOTREC_PURE_PYTHON=1 to force the fallback. Both backends
implement identical arithmetic and are interchangeable bit-for-bit.
"""

import os

from . import pykernel

if os.environ.get("SPOTREC_PURE_PYTHON"):
    _impl = pykernel
    BACKEND = "python"
else:
    try:
        from . import _gibbs as _impl

        BACKEND = "c"
    except ImportError:
        _impl = pykernel
        BACKEND = "python"

sweep_b = _impl.sweep_b
sweep_mix = _impl.sweep_mix


def active_backend() -> str:
    """Name of the backend selected at import ("c" or "python")."""
    return BACKEND


def get_kernel(backend: str = "auto"):
    """Return (sweep_b, sweep_mix) for an explicitly chosen backend."""
    if backend == "auto":
        return sweep_b, sweep_mix
    if backend == "python":
        return pykernel.sweep_b, pykernel.sweep_mix
    if backend == "c":
        from . import _gibbs

        return _gibbs.sweep_b, _gibbs.sweep_mix
    raise ValueError(f"unknown kernel backend {backend!r}")
