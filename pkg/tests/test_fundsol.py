import numpy as np
import pytest

from coaglin.core import FieldSeries, build_grid
from coaglin.fundsol import (FundSolResult, Phi, _loglog_fit, check_selfsimilar,
                             check_tail_bounds, compute_fundamental, duhamel_exponent_test,
                             gaussian_data, resolves, scaled_variable)


def test_phi_profile():
    assert Phi(0.0) == 1.0
    assert Phi(4.0) == pytest.approx(1 / 9)
    assert Phi(-4.0) == Phi(4.0)


def test_scaled_variable(params):
    # t^(2/(lam-1)) x = t^4 x for lam = 3/2
    assert scaled_variable(2.0, 3.0, params.lam) == pytest.approx(48.0)


def test_gaussian_unit_mass():
    grid = build_grid(-4, 4, 24)
    g = gaussian_data(grid, 1.0, 0.02)
    assert grid.integrate(g) == pytest.approx(1.0, rel=1e-14)
    assert not resolves(grid, 1.0, 0.02)
    assert resolves(build_grid(-4, 4, 200), 1.0, 0.02)


def test_loglog_fit_exact_power():
    x = np.geomspace(1, 100, 20)
    r = _loglog_fit(x, 3 * x**-1.7)
    assert r["slope"] == pytest.approx(-1.7) and r["intercept"] == pytest.approx(np.log(3))
    assert r["residual"] < 1e-12 and r["n"] == 20
    with pytest.raises(ValueError):
        _loglog_fit(x[:2], x[:2])
    with pytest.raises(ValueError):
        _loglog_fit(x, -x)


def _synthetic(x0, lam, grid, times):
    """g(t, x, x0) = x0^-1 G(t x0^((lam-1)/2), x/x0), the scaling L is invariant under."""
    G = lambda s, y: np.exp(-((y - 1) ** 2) / (0.1 + s)) / np.sqrt(0.1 + s)
    vals = np.stack([G(t * x0 ** ((lam - 1) / 2), grid.nodes / x0) / x0 for t in times])
    return FundSolResult(x0, x0 / 50, np.asarray(times), FieldSeries(grid, times, vals), 0.01, False)


def test_selfsimilar_detects_exact_scaling(params):
    grid = build_grid(-6, 6, 32)
    t = 0.25
    r1 = _synthetic(1.0, params.lam, grid, [t * 2 ** 0.25])
    r2 = _synthetic(2.0, params.lam, grid, [t])
    rep = check_selfsimilar(r1, r2, t, params.lam)
    assert rep["deviation"] < 1e-6 and rep["scale"] == 2.0
    with pytest.raises(ValueError):
        check_selfsimilar(r1, r2, 0.5, params.lam)


@pytest.fixture(scope="module")
def fundamental(profile):
    grid = build_grid(-8, 8, 16)
    return compute_fundamental(1.0, 0.02, [0.05, 0.5], grid, profile)


def test_fundamental_mass_leaves_source(fundamental):
    g = fundamental.g
    x = g.grid.nodes
    near = (x > 0.9) & (x < 1.1)
    assert g.grid.integrate(g.values[0]) == pytest.approx(1.0)
    assert np.max(np.abs(g.values[-1][near])) < np.max(np.abs(g.values[1][near]))
    with pytest.raises(ValueError):
        compute_fundamental(1.0, 0.05, [0.1], g.grid, None)


def test_tail_fits_structure(fundamental, params):
    tb = check_tail_bounds(fundamental, 0.5, params.lam)
    assert set(tb) >= {"small", "large", "interior"}
    assert tb["small"]["slope"] == pytest.approx(-1.5, abs=0.2)
    assert tb["large"]["slope"] == pytest.approx(-params.p_out, abs=0.2)
    assert tb["interior"]["Phi0"] == 1.0
    d = fundamental.to_dict()
    assert d["times"] == [0.0, 0.05, 0.5] and len(fundamental.long_rows()) == 3 * fundamental.g.grid.N


def test_duhamel_exponent_small_delta(params):
    rep = duhamel_exponent_test(params.replace(delta=0.1), grid=build_grid(-8, 14, 8))
    assert rep["beta"] == pytest.approx(0.4)
    assert np.isfinite(rep["fit"]["slope"]) and rep["fit"]["slope"] > 0
    assert all(r["ratio"] > 0 for r in rep["rows"])
