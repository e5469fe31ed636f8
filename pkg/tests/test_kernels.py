import importlib
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coaglin import _kernels_py, kernels
from coaglin.core import build_grid

compiled = pytest.importorskip("coaglin._kernels")


def _scatter(impl, grid, rows, z, coef, nrows):
    M = np.zeros((nrows, grid.N))
    kernels.accumulate(M, rows, z, coef, grid, impl=impl)
    return M


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 20), st.integers(1, 300), st.integers(0, 2**31 - 1))
def test_compiled_matches_fallback(P, npts, seed):
    grid = build_grid(-3, 3, P)
    rng = np.random.default_rng(seed)
    z = rng.uniform(0.05, 10.0, npts)  # includes points outside the grid
    rows = rng.integers(0, 5, npts)
    coef = rng.standard_normal(npts)
    a = _scatter(_kernels_py.accumulate, grid, rows, z, coef, 5)
    b = _scatter(compiled.accumulate, grid, rows, z, coef, 5)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13)


def test_partition_of_unity():
    grid = build_grid(-2, 2, 9)
    z = np.geomspace(0.25, 3.99, 50)
    M = _scatter(None, grid, np.arange(50), z, np.ones(50), 50)
    np.testing.assert_allclose(M.sum(axis=1), 1.0, rtol=1e-13)


def test_node_hit_is_exact():
    grid = build_grid(0, 1, 6)
    M = _scatter(None, grid, [0], [grid.nodes[2]], [3.0], 1)
    assert M[0, 2] == pytest.approx(3.0, rel=1e-14)
    assert np.abs(np.delete(M[0], 2)).max() < 1e-14


def test_env_forces_fallback():
    code = "from coaglin import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={"COAGLIN_PURE_PYTHON": "1", "PATH": ""}, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND == "cython"
