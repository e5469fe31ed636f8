"""Fourier symbols of the frozen-coefficient operators."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from .core import Profile

SQRT2PI = np.sqrt(2.0 * np.pi)


class QuadratureWarning(RuntimeWarning):
    pass


def _quad(f, a, b, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, **kw)[:2]
    return val, err


def fourier_minus_one(F: Callable[[float], float], z: float,
                      tail: Callable[[float], float] | None = None,
                      tol: float = 1e-11) -> tuple[complex, float]:
    """int_0^inf F(y) (exp(-i z y) - 1) dy and an error estimate.

    F may behave like y^-3/2 at 0 and must decay at least like y^-1-s at
    infinity. With a = 1/|z|, on (0, a) the substitution y = u^2 removes the endpoint
    singularity; on (a, inf) QUADPACK's Fourier-integral rule handles the
    oscillation. ``tail(a)`` should return the integral of F over (a, inf) when
    a closed form exists.
    """
    z = float(z)
    if z == 0.0:
        return 0j, 0.0
    az = abs(z)
    sgn = 1.0 if z > 0 else -1.0
    a = 1.0 / az
    ua = np.sqrt(a)
    opts = dict(epsabs=tol, epsrel=tol, limit=400)
    fr = lambda u: -2.0 * np.sin(0.5 * az * u * u) ** 2 * F(u * u) * 2.0 * u
    fi = lambda u: -np.sin(az * u * u) * F(u * u) * 2.0 * u
    # geometric pieces keep the slowly decaying part well resolved for small z
    edges = [0.0] + [e for e in 2.0 ** np.arange(0, 64) if e < ua] + [ua]
    re1 = im1 = e1 = e2 = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, e = _quad(fr, lo, hi, **opts)
        re1, e1 = re1 + v, e1 + e
        v, e = _quad(fi, lo, hi, **opts)
        im1, e2 = im1 + v, e2 + e
    re2, e3 = _quad(F, a, np.inf, weight="cos", wvar=az, epsabs=tol, limlst=200)
    im2, e4 = _quad(F, a, np.inf, weight="sin", wvar=az, epsabs=tol, limlst=200)
    if tail is None:
        t, e5 = _quad(F, a, np.inf, epsabs=tol, epsrel=tol, limit=400)
    else:
        t, e5 = tail(a), 0.0
    val = complex(re1 + re2 - t, sgn * (im1 - im2))
    return val, e1 + e2 + e3 + e4 + e5


def half_derivative_integral(z: float) -> complex:
    """Quadrature of int_0^inf (exp(-i z y) - 1) y^-3/2 dy."""
    return fourier_minus_one(lambda y: y**-1.5, z, tail=lambda a: 2.0 / np.sqrt(a))[0]


def half_derivative_closed_form(z):
    z = np.asarray(z, dtype=float)
    return -SQRT2PI * np.sqrt(np.abs(z)) * (1 + 1j * np.sign(z))


def lambda_symbol(xi):
    """Multiplier of the half-derivative operator Lambda."""
    return -SQRT2PI * np.sqrt(np.abs(np.asarray(xi, dtype=float)))


@lru_cache(maxsize=200_000)
def _wtilde_cached(z: float, profile: Profile) -> complex:
    lam = profile.params.lam
    f0 = profile.f0
    F = lambda y: y ** (lam / 2) * float(f0(y))
    val, err = fourier_minus_one(F, z, tail=profile.moment_tail)
    if not np.isfinite(val.real + val.imag) or err > 1e-6:
        warnings.warn(f"wtilde quadrature did not converge at z={z}", QuadratureWarning)
    return val


def wtilde(z, profile: Profile):
    """int_0^inf f0(y) y^(lam/2) (exp(-i z y) - 1) dy, elementwise in z."""
    zz = np.asarray(z, dtype=float)
    out = np.array([_wtilde_cached(float(v), profile) for v in zz.ravel()], dtype=complex)
    return out.reshape(zz.shape) if zz.ndim else complex(out[0])


def symbol_W(xi, eps: float, R: float, profile: Profile, wt: Callable | None = None):
    """Symbol of T_{eps,R}: -eps sqrt(2 pi)(1+i sgn xi)|xi|^1/2 + (1-eps) sqrt(R) W~(xi/R)."""
    if R < 1:
        raise ValueError("R must be >= 1")
    xi = np.asarray(xi, dtype=float)
    out = eps * half_derivative_closed_form(xi)
    if eps < 1:
        wfun = (lambda z: wtilde(z, profile)) if wt is None else wt
        out = out + (1 - eps) * np.sqrt(R) * wfun(xi / R)
    return out


def symbol_P_eps(x: float, k: float, eps: float) -> complex:
    """int_0^inf (exp(-i k y) - 1) / (y^3/2 + eps^3/2 x^3/2) dy."""
    if x <= 0:
        raise ValueError("x must be positive")
    if eps == 0:
        return complex(half_derivative_integral(k))
    c = (eps * x) ** 1.5
    F = lambda y: 1.0 / (y**1.5 + c)
    return fourier_minus_one(F, k)[0]


# ---------------------------------------------------------------------------
# tabulated symbol for bulk use


@dataclass(frozen=True, eq=False)
class WtildeTable:
    """Cubic spline of W~(z)/((1+i)|z|^1/2) in log|z| for fast bulk evaluation."""

    profile: Profile
    zmin: float
    zmax: float
    re: CubicSpline
    im: CubicSpline

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        az = np.abs(z)
        out = np.zeros(z.shape, dtype=complex)
        nz = az > 0
        s = np.log(np.clip(az[nz], self.zmin, self.zmax))
        ratio = self.re(s) + 1j * self.im(s)
        val = ratio * (1 + 1j) * np.sqrt(az[nz])
        big = az[nz] > self.zmax
        if np.any(big):
            val[big] = wtilde(az[nz][big], self.profile)
        val = np.where(z[nz] < 0, np.conj(val), val)
        out[nz] = val
        return out


@lru_cache(maxsize=8)
def wtilde_table(profile: Profile, zmin: float = 1e-6, zmax: float = 1e5,
                 per_decade: int = 40) -> WtildeTable:
    n = int(round(np.log10(zmax / zmin) * per_decade)) + 1
    zs = np.geomspace(zmin, zmax, n)
    w = wtilde(zs, profile)
    ratio = w / ((1 + 1j) * np.sqrt(zs))
    s = np.log(zs)
    return WtildeTable(profile, zmin, zmax, CubicSpline(s, ratio.real), CubicSpline(s, ratio.imag))


# ---------------------------------------------------------------------------
# symbol grids


@dataclass(frozen=True, eq=False)
class SymbolGrid:
    xi: np.ndarray
    W: np.ndarray
    eps: float
    R: float
    method: str

    def check(self) -> dict:
        """Invariants: W(0)=0, Hermitian symmetry, strict dissipativity."""
        xi, W = self.xi, self.W
        flip = W[::-1]
        herm = float(np.max(np.abs(flip - np.conj(W)))) if len(W) else 0.0
        nz = xi != 0
        zero = W[~nz]
        return {
            "W0": float(np.max(np.abs(zero))) if zero.size else 0.0,
            "hermitian_err": herm,
            "max_re_nonzero": float(np.max(W[nz].real)) if nz.any() else -np.inf,
            "re_violations": int(np.sum(W[nz].real >= 0)),
        }

    def to_csv_rows(self):
        return [(float(a), float(b.real), float(b.imag)) for a, b in zip(self.xi, self.W)]


def build_symbol_grid(xi_max: float, n: int, eps: float, R: float, profile: Profile,
                      method: str = "quadrature") -> SymbolGrid:
    """W on the symmetric mesh xi_max * j / n, j = -n..n.

    Negative frequencies are evaluated independently, so the Hermitian
    check is a genuine test of the quadrature.
    """
    xi = xi_max * np.arange(-n, n + 1) / n
    if method == "quadrature":
        W = symbol_W(xi, eps, R, profile)
    elif method == "spline":
        W = symbol_W(xi, eps, R, profile, wt=wtilde_table(profile))
    elif method == "closed-form":
        if eps != 1:
            raise ValueError("closed form only for eps = 1")
        W = half_derivative_closed_form(xi)
    else:
        raise ValueError(method)
    return SymbolGrid(xi, np.asarray(W, dtype=complex), float(eps), float(R), method)


def check_symbol_inequalities(grid: SymbolGrid, beta: float = 0.5,
                              times=None) -> dict:
    """Sampled constants in the two-point and smoothing inequalities.

    Two-point: |W(xi)-W(z)| <= C |xi-z| (1+|W(z)|)^a (1+|W(xi)|)^b / (|z|^a |xi|^b)
    with a + b = 1, over all grid pairs with |xi|, |z| >= 1.
    Smoothing: exp(-2 t |Re W|) |W|^(2 beta) <= C t^(-2 beta).
    """
    xi, W = grid.xi, grid.W
    m = np.abs(xi) >= 1
    X, WX = xi[m], W[m]
    a = 1.0 - beta
    lhs = np.abs(WX[:, None] - WX[None, :])
    dx = np.abs(X[:, None] - X[None, :])
    rhs = dx * (1 + np.abs(WX[None, :])) ** a * (1 + np.abs(WX[:, None])) ** beta \
        / (np.abs(X[None, :]) ** a * np.abs(X[:, None]) ** beta)
    off = dx > 0
    two_point = float(np.max(lhs[off] / rhs[off])) if off.any() else 0.0
    diag = float(np.max(lhs[~off])) if (~off).any() else 0.0
    ts = np.geomspace(1e-3, 1.0, 31) if times is None else np.asarray(times, dtype=float)
    sm = np.exp(-2 * ts[:, None] * np.abs(W.real)[None, :]) * np.abs(W)[None, :] ** (2 * beta) \
        * ts[:, None] ** (2 * beta)
    return {"two_point_C": two_point, "diagonal_lhs": diag,
            "smoothing_C": float(np.max(sm)), "beta": beta}


def wtilde_derivative_decay(profile: Profile, gamma: float | None = None,
                            zs=None, h_rel: float = 1e-4) -> float:
    """max over samples of (1+|z|^(1+gamma)) |W~'(z)| by central differences."""
    g = profile.params.gamma if gamma is None else gamma
    zs = np.geomspace(0.1, 1e3, 25) if zs is None else np.asarray(zs, dtype=float)
    h = h_rel * zs
    d = (wtilde(zs + h, profile) - wtilde(zs - h, profile)) / (2 * h)
    return float(np.max((1 + zs ** (1 + g)) * np.abs(d)))
