import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from coaglin.core import (Field, FieldSeries, ModelParams, PeriodicGrid, build_grid,
                          bump_profile, canonical_profile, chi_cutoff, eta_cutoff,
                          make_cutoff, manifest, smooth_transition)


@pytest.mark.parametrize("kw", [dict(lam=1.0), dict(lam=2.0), dict(sigma=0.5), dict(sigma=1.0),
                                dict(gamma=0.0), dict(delta=0.0), dict(T=1.5), dict(theta=1.2),
                                dict(eps=-0.1), dict(A=0.0)])
def test_params_reject_out_of_range(kw):
    with pytest.raises(ValueError):
        ModelParams(**kw)


def test_params_defaults(params):
    assert (params.lam, params.sigma, params.delta, params.gamma) == (1.5, 0.75, 1.0, 0.5)
    assert params.p_out == 2.25
    assert params.replace(lam=1.25).p_out == 2.125


def test_smooth_transition_limits():
    t = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    v = smooth_transition(t)
    np.testing.assert_array_equal(v[[0, 1, 3, 4]], [0, 0, 1, 1])
    assert v[2] == pytest.approx(0.5)


def test_cutoff_plateau_and_support():
    c = make_cutoff(1, 2, 3, 4)
    x = np.linspace(0, 5, 501)
    v = c(x)
    assert np.all(v[(x <= 1) | (x >= 4)] == 0)
    assert np.all(v[(x >= 2) & (x <= 3)] == 1)
    assert np.all((v >= 0) & (v <= 1))
    with pytest.raises(ValueError):
        make_cutoff(1, 1, 3, 4)


def test_named_cutoffs():
    assert chi_cutoff(8.0).breakpoints == (6.0, 7.0, 9.0, 10.0)
    eta = eta_cutoff()
    assert eta(1.0) == 1.0 and eta(0.1) == 0.0 and eta(4.0) == 0.0


def test_canonical_moment_closed_form(profile):
    # A B((lam+2)/4, 1/4) / 2
    assert profile.moment_total == pytest.approx(2.0975232323119280, rel=1e-13)


@pytest.mark.parametrize("a", [0.1, 1.0, 7.0, 300.0])
def test_canonical_moment_tail_against_quad(profile, a):
    f = lambda y: y**0.75 * (1 + y * y) ** (-1.125)
    ref = integrate.quad(f, a, np.inf, epsabs=1e-14, epsrel=1e-12, limit=400)[0]
    assert profile.moment_tail(a) == pytest.approx(ref, rel=1e-9)


def test_h0_decay_and_bound(params, profile):
    rep = profile.decay_report()
    assert rep["sup_h0"] <= params.B and rep["sup_h0_prime"] <= params.B
    # f0 - x^-p_out vanishes faster than x^-p_out
    assert abs(profile.h0(1e3)) < 1e-5 * 1e3 ** -params.p_out


def test_canonical_profile_checks_bound(params):
    with pytest.raises(ValueError):
        canonical_profile(params.replace(B=1e-3))


def test_bump_profile_moment(params):
    prof = bump_profile(params)
    ref = integrate.quad(lambda y: y**0.75 * 256 * (y - 1) ** 4 * (2 - y) ** 4, 1, 2)[0]
    assert prof.moment_total == pytest.approx(ref, rel=1e-12)
    assert prof.f0(np.array([0.5, 2.5])).tolist() == [0.0, 0.0]


def test_grid_layout():
    g = build_grid(-2, 3, 8)
    assert g.N == 40 and g.lo == 0.25 and g.hi == 8.0
    assert np.all(np.diff(g.nodes) > 0)
    np.testing.assert_array_equal(g.block_of(np.array([0.25, 0.5, 1.0, 1.999, 4.0])), [-2, -1, 0, 0, 2])
    assert g.nodes[g.block_slice(0)].min() > 1 and g.nodes[g.block_slice(0)].max() < 2


@pytest.mark.parametrize("k", [0, 3, 7, 15])
def test_grid_integrates_polynomials_per_block(k):
    g = build_grid(-3, 3, 8)
    exact = (8.0 ** (k + 1) - 0.125 ** (k + 1)) / (k + 1)
    assert g.integrate(g.nodes**k) == pytest.approx(exact, rel=1e-13)


def test_grid_integrates_power_law():
    g = build_grid(-10, 10, 16)
    exact = 2 * (2.0**-5 - 2.0**5)  # int x^-3/2 over [2^-10, 2^10]
    assert g.integrate(g.nodes**-1.5) == pytest.approx(-exact, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(1.0, 7.999), st.integers(0, 7))
def test_interpolation_exact_for_polynomials(z, k):
    g = build_grid(0, 3, 8)
    assert g.interpolate(g.nodes**k, z)[0] == pytest.approx(z**k, rel=1e-11)


def test_interpolation_zero_outside(grid):
    v = grid.interpolate(np.ones(grid.N), np.array([grid.lo / 2, grid.hi, 1e9]))
    np.testing.assert_array_equal(v, 0.0)


def test_interpolation_hits_nodes(grid):
    vals = np.sin(grid.nodes)
    np.testing.assert_allclose(grid.interpolate(vals, grid.nodes), vals, rtol=1e-13, atol=1e-15)


def test_checksum_and_manifest_stable(params):
    a, b = build_grid(-4, 4, 8), build_grid(-4, 4, 8)
    assert a.checksum() == b.checksum() != build_grid(-4, 4, 9).checksum()
    m1 = manifest(params, a, scheme="imex")
    assert m1 == manifest(params, b, scheme="imex")
    doc = json.loads(m1)
    assert doc["grid"]["P"] == 8 and doc["params"]["lam"] == 1.5


def test_periodic_grid_frequencies():
    pg = PeriodicGrid(-1.0, 2.0, 8)
    assert pg.h == 0.25
    np.testing.assert_allclose(pg.k[:4], np.pi * np.arange(4))


def test_field_and_series(grid):
    f = Field.from_function(grid, np.exp)
    assert f.with_values(2 * f.values).values[0] == pytest.approx(2 * np.exp(grid.nodes[0]))
    with pytest.raises(ValueError):
        Field(grid, np.zeros(3))
    fs = FieldSeries.from_function(grid, [0.0, 1.0], lambda x, t: t * x)
    np.testing.assert_allclose(fs.at(0.5), 0.5 * grid.nodes)
    assert len(fs) == 2 and fs.field(1).t == 1.0


def test_incomplete_beta_identity_used_for_tail(params, profile):
    # tail(a) = I B_(1-s)(1/4, (lam+2)/4) with s = a^2/(1+a^2)
    a = 3.0
    s = a * a / (1 + a * a)
    assert profile.moment_tail(a) == pytest.approx(
        profile.moment_total * special.betainc(0.25, 0.875, 1 - s), rel=1e-14)
