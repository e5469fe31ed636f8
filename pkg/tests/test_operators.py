import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coaglin.core import Field, PeriodicGrid, build_grid, bump_profile, chi_cutoff
from coaglin.operators import (KernelSpec, apply_A1, apply_A2eps, apply_cal_L, apply_L,
                               apply_L_eps, apply_localized_remainder, apply_T, apply_TM,
                               apply_Wcal, operator_matrix, phi_kernel, support_overflow,
                               symmetrization_defect, truncation_estimate)
from coaglin.symbols import half_derivative_closed_form, symbol_W, wtilde_table

from conftest import bump


@pytest.fixture(scope="module")
def g(grid):
    return Field.from_function(grid, bump)


# Brute-force scipy.quad evaluation of the defining integrals for the bump on [1, 2]
@pytest.mark.parametrize("op, x, ref", [
    ("L", 8.0, 0.009006947344168644),
    ("calL", 4.0, 0.054634981646254785),
    ("calL", 1.5, -2.9933705985314254),
])
def test_against_quadrature_oracle(grid, profile, g, op, x, ref):
    v = grid.interpolate(operator_matrix(op, grid, profile) @ g.values, x)[0]
    assert v == pytest.approx(ref, rel=1e-6)


@pytest.mark.parametrize("i, L_ref, calL_ref", [
    (97, -0.5341250327752116, -0.24989817424078067),
    (104, -5.645691205586102, -2.933495329389324),
    (108, 3.914064323368277, -0.06458271214130977),
    (113, 1.453824313121551, 0.10371304242215806),
])
def test_nodes_against_quadrature_oracle(grid, profile, g, i, L_ref, calL_ref):
    assert apply_L(g, profile).values[i] == pytest.approx(L_ref, rel=1e-9)
    assert apply_cal_L(g, profile).values[i] == pytest.approx(calL_ref, rel=1e-9)


def test_H_value(profile):
    # 2^(3/4) 5^(-9/8) - 2^(-3/2)
    assert KernelSpec("background", profile).H(2.0) == pytest.approx(-0.07849098181982095, rel=1e-12)


def test_zero_and_linearity(grid, profile, g):
    z = g.with_values(np.zeros(grid.N))
    for fn in (apply_L, apply_cal_L, apply_A1):
        assert np.all(fn(z, profile).values == 0)
        np.testing.assert_allclose(fn(g.with_values(3 * g.values), profile).values,
                                   3 * fn(g, profile).values, rtol=1e-14, atol=1e-15)


def test_L_homogeneity(profile):
    # (L g(2 .))(x) = 2^(-(lam-1)/2) (L g)(2x); node i + P is twice node i
    grid = build_grid(-6, 6, 16)
    lam = profile.params.lam
    L = operator_matrix("L", grid, profile)
    gv = bump(grid.nodes, 0.5, 1.0)
    g2 = bump(2 * grid.nodes, 0.5, 1.0)
    a = (L @ g2)[16:150]
    b = 2 ** (-(lam - 1) / 2) * (L @ gv)[32:166]
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12 * np.abs(b).max())


def test_difference_of_linearisations(grid, profile, g):
    # calL - L = A1 + A2
    lhs = apply_cal_L(g, profile).values - apply_L(g, profile).values
    rhs = apply_A1(g, profile).values + apply_A2eps(g, profile).values
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-12)


def test_L_eps_zero_is_L(grid, profile, g):
    np.testing.assert_array_equal(apply_L_eps(g, profile, 0.0).values, apply_L(g, profile).values)
    with pytest.raises(ValueError):
        apply_L_eps(g, profile, -1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(0.0, 1.0))
def test_regularized_kernel_dominated(profile, x, y, eps):
    k = KernelSpec("regularized", profile, eps=eps)
    assert k(y, x) <= y**-1.5 * (1 + 1e-14)


def test_interpolated_kernel(profile):
    y = np.geomspace(1e-3, 1e3, 50)
    ks = KernelSpec("interpolated", profile, R=4.0, eps=0.3)
    bg = 4.0**2.25 * y**0.75 * profile.f0(4.0 * y)
    np.testing.assert_allclose(ks(y), 0.3 * y**-1.5 + 0.7 * bg, rtol=1e-14)
    np.testing.assert_allclose(phi_kernel(y, 4.0, 0.3, profile), ks(y))
    with pytest.raises(ValueError):
        KernelSpec("nope", profile)


def test_L_eps_converges_at_half_rate(profile):
    grid = build_grid(-8, 8, 16)
    g = np.exp(-4 * np.log(grid.nodes) ** 2)
    Lg = operator_matrix("L", grid, profile) @ g
    eps = 2.0 ** -np.arange(1, 9)
    err = [np.sqrt(grid.integrate(((operator_matrix("L_eps", grid, profile, eps=e) @ g) - Lg) ** 2))
           for e in eps]
    slope = np.polyfit(np.log(eps), np.log(err), 1)[0]
    assert abs(slope - 0.5) <= 0.15


def test_symmetrization_with_compact_profile(params):
    grid = build_grid(-4, 4, 32)
    v, scale = symmetrization_defect(Field.from_function(grid, lambda x: bump(x, 0.5, 1.5)),
                                     bump_profile(params))
    assert abs(v) <= 1e-8 * scale


def test_A1_weighted_decay(params, profile):
    grid = build_grid(-8, 10, 16)
    x = grid.nodes
    phi = Field.from_function(grid, lambda x: np.minimum(x**-1.5, x**-params.p_out))
    A = apply_A1(phi, profile).values
    m = (x >= 2) & (x <= 64)
    w = x[m] ** 3 * np.abs(A[m])
    assert np.isfinite(w).all() and w.max() < 5.0


def _remainder_defect(profile, chi, P):
    grid = build_grid(-3, 6, P)
    g = Field.from_function(grid, lambda x: np.exp(-np.log(x / 6) ** 2))
    lhs = chi(grid.nodes) * apply_cal_L(g, profile).values
    rhs = apply_Wcal(g.with_values(chi(grid.nodes) * g.values), profile, "R", R=1.0).values \
        + apply_localized_remainder(g, chi, profile).values
    plateau = (grid.nodes > 7) & (grid.nodes < 9)
    return np.max(np.abs(lhs[plateau] - rhs[plateau]) / np.abs(lhs[plateau])), g


def test_localized_remainder_identity(profile):
    # chi calL(g) = W_1(chi g) + remainder(g); the defect is interpolation error of chi g
    chi = chi_cutoff(8.0)
    coarse, _ = _remainder_defect(profile, chi, 32)
    fine, g = _remainder_defect(profile, chi, 96)
    assert fine < 1e-6 and fine < coarse / 100
    zero = g.with_values(np.zeros(g.grid.N))
    assert np.all(apply_localized_remainder(zero, chi, profile).values == 0)


def test_truncation_estimate_shrinks_with_range(profile):
    fn = lambda x: np.minimum(x**-1.5, x**-2.25)
    levels = []
    for J in (4, 8):
        grid = build_grid(-J, J, 8)
        est = truncation_estimate(Field.from_function(grid, fn), profile)
        # the estimate is a multiple of x^-3/2
        np.testing.assert_allclose(est * grid.nodes**1.5, est[0] * grid.nodes[0] ** 1.5, rtol=1e-12)
        levels.append(est[0] * grid.nodes[0] ** 1.5)
    assert levels[1] < levels[0]


# T on a periodic mesh

@pytest.fixture(scope="module")
def mesh():
    return PeriodicGrid(-32.0, 64.0, 2**14)


def test_T_constant_is_zero(profile, mesh):
    f = Field(mesh, np.full(mesh.N, 2.0))
    assert np.abs(apply_T(f, profile, 0.4, 2.0).values).max() < 1e-10


@pytest.mark.parametrize("eps, R", [(0.0, 1.0), (0.5, 8.0), (1.0, 64.0)])
def test_T_matches_multiplier(profile, mesh, eps, R):
    f = Field.from_function(mesh, lambda x: np.exp(-x * x))
    direct = apply_T(f, profile, eps, R).values
    mult = np.fft.ifft(symbol_W(mesh.k, eps, R, profile, wt=wtilde_table(profile))
                       * np.fft.fft(f.values)).real
    assert np.linalg.norm(direct - mult) <= 1e-3 * np.linalg.norm(mult)


@pytest.mark.parametrize("m", [8, 32])
def test_T_half_derivative_on_plane_wave(profile, mesh, m):
    k = 2 * np.pi * m / mesh.length
    f = Field(mesh, np.cos(k * mesh.nodes))
    out = apply_T(f, profile, 1.0).values
    F = np.fft.rfft(out)[m] / (mesh.N / 2)
    assert abs(F) == pytest.approx(abs(half_derivative_closed_form(k)), rel=1e-3)


def test_TM_requires_support_on_half_line(profile):
    pm = PeriodicGrid(-4.0, 16.0, 1024)
    with pytest.raises(ValueError):
        apply_TM(Field(pm, np.ones(1024)), profile, 0.5)
    f = Field.from_function(pm, lambda x: np.where(x > 0, np.exp(-(x - 4) ** 2), 0.0))
    assert np.isfinite(apply_TM(f, profile, 0.5).values).all()


def test_support_overflow(mesh):
    assert not support_overflow(Field.from_function(mesh, lambda x: np.exp(-x * x)))
    assert support_overflow(Field(mesh, np.ones(mesh.N)))
    with pytest.raises(TypeError):
        apply_T(Field.from_function(build_grid(0, 1, 4), np.exp), None, 0.5)
