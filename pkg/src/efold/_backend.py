"""Kernel backend selection.

``EFOLD_BACKEND=numpy`` forces the pure-numpy fallback, ``EFOLD_BACKEND=numba``
requires the jitted kernels, anything else (or unset) auto-detects. Both
backends expose the same functions and return bit-identical results.
"""

from __future__ import annotations

import os
import warnings

from .errors import EfoldError

from . import _kernels_numpy

_ENV_VAR = "EFOLD_BACKEND"


def _load_numba_kernels():
    from . import _kernels_numba

    return _kernels_numba


def get_kernels(backend: str | None = None):
    """Return the kernel module for ``backend`` (env-resolved when None)."""
    if backend is None:
        backend = os.environ.get(_ENV_VAR, "auto").lower()
    if backend == "numpy":
        return _kernels_numpy
    if backend == "numba":
        return _load_numba_kernels()
    if backend == "auto":
        try:
            return _load_numba_kernels()
        except ImportError:
            warnings.warn("numba unavailable, falling back to numpy kernels")
            return _kernels_numpy
    raise EfoldError("E005", f"unknown backend {backend!r} (use numba, numpy or auto)")


def active_backend_name(backend: str | None = None) -> str:
    return get_kernels(backend).BACKEND_NAME
