"""Selects the compiled kernel when available, else the numpy fallback.

Set ``COAGLIN_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py.accumulate

if os.environ.get("COAGLIN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled

        _impl = _compiled.accumulate
        BACKEND = "cython"
    except ImportError:  # extension not built
        pass


def accumulate(M, rows, z, coef, grid, impl=None):
    """Scatter ``coef * interpolant(z)`` rows into the dense matrix ``M``."""
    fn = _impl if impl is None else impl
    fn(M, rows, z, coef, grid.Jmin, grid.Jmax, grid.P, grid.ref_nodes, grid.bary)
