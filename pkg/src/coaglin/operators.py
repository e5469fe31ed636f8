"""Direct-space evaluation of the integral operators.

Every operator on a ``GradedGrid`` is assembled once into a dense matrix.
Row i holds quadrature coefficients for the output at node x_i. Values of the
input at off-node points come from the per-block polynomial interpolant, and
the compiled scatter kernel in :mod:`coaglin.kernels` does the bookkeeping.
Applying an operator to a field is then a matrix-vector product.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from . import kernels
from .core import (Field, GradedGrid, ModelParams, PeriodicGrid, Profile,
                   SmoothCutoff)

SQ2 = np.sqrt(2.0)


@lru_cache(maxsize=None)
def _gl01(q: int):
    t, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (t + 1.0), 0.5 * w


def _pieces(a: float, b: float, cuts) -> np.ndarray:
    inner = [c for c in cuts if a < c < b]
    return np.array([a] + sorted(set(inner)) + [b])


def _gauss(edges: np.ndarray, q: int):
    """Gauss-Legendre points and weights on consecutive intervals."""
    s, w = _gl01(q)
    lo, hi = edges[:-1], edges[1:]
    ln = (hi - lo)[:, None]
    return (lo[:, None] + ln * s[None, :]).ravel(), (ln * w[None, :]).ravel()


# ---------------------------------------------------------------------------
# kernels


@dataclass(frozen=True)
class KernelSpec:
    """Jump kernels.

    ``kind`` is one of ``singular`` (y^-3/2), ``background`` (y^(lam/2) f0(y)),
    ``interpolated`` (Phi(y, R, eps)) or ``regularized``
    (1/(y^3/2 + eps^3/2 x^3/2)).
    """

    kind: str
    profile: Profile
    R: float = 1.0
    eps: float = 0.0

    def __post_init__(self):
        if self.kind not in ("singular", "background", "interpolated", "regularized"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.R < 1.0:
            raise ValueError("R must be >= 1")

    @property
    def lam(self) -> float:
        return self.profile.params.lam

    def background(self, y, R: float = 1.0):
        y = np.asarray(y, dtype=float)
        lam = self.lam
        return R ** ((3 + lam) / 2) * y ** (lam / 2) * self.profile.f0(R * y)

    def __call__(self, y, x=None):
        y = np.asarray(y, dtype=float)
        if self.kind == "singular":
            return y**-1.5
        if self.kind == "background":
            return self.background(y)
        if self.kind == "interpolated":
            return self.eps * y**-1.5 + (1 - self.eps) * self.background(y, self.R)
        return 1.0 / (y**1.5 + self.eps**1.5 * np.asarray(x, dtype=float) ** 1.5)

    # derived accessors
    def H(self, y):
        return self.background(y) - np.asarray(y, dtype=float) ** -1.5

    def H_eps(self, x, y):
        y = np.asarray(y, dtype=float)
        return self.background(y) - 1.0 / (y**1.5 + self.eps**1.5 * np.asarray(x) ** 1.5)

    def H_R(self, X):
        return self.background(X, self.R) - np.asarray(X, dtype=float) ** -1.5


def phi_kernel(y, R: float, eps: float, profile: Profile):
    return KernelSpec("interpolated", profile, R, eps)(y)


# ---------------------------------------------------------------------------
# assembly


class _Builder:
    """Collects (row, point, coefficient) triples plus exact dense entries."""

    def __init__(self, grid: GradedGrid, q: int | None = None):
        self.grid = grid
        self.q = q or max(grid.P, 12)
        self.rows: list[np.ndarray] = []
        self.z: list[np.ndarray] = []
        self.c: list[np.ndarray] = []
        self.dense = np.zeros((grid.N, grid.N))
        self.cuts = [2.0**n for n in range(grid.Jmin, grid.Jmax + 1)]

    def add(self, i: int, z, c):
        z = np.asarray(z, dtype=float)
        self.rows.append(np.full(z.shape, i, dtype=np.int64))
        self.z.append(z)
        self.c.append(np.asarray(c, dtype=float))

    def diag(self, i: int, value: float):
        self.dense[i, i] += value

    def build(self) -> np.ndarray:
        M = self.dense.copy()
        if self.z:
            kernels.accumulate(M, np.concatenate(self.rows), np.concatenate(self.z),
                               np.concatenate(self.c), self.grid)
        return M

    # -- integral templates -------------------------------------------------

    def span(self, i: int, a: float, b: float, weight: Callable, extra=()):
        """Row for the integral over (a, b) of weight(y) g(y) dy."""
        g = self.grid
        a, b = max(a, g.lo), min(b, g.hi)
        if b <= a:
            return
        y, w = _gauss(_pieces(a, b, list(self.cuts) + list(extra)), self.q)
        self.add(i, y, w * weight(y))

    def difference(self, i: int, x: float, kern: Callable, lam: float,
                   subtract: bool = True, extra_u=(), nsplit: int = 6):
        """Row for the integral over (0, x/2) of
        ((x-y)^(lam/2) g(x-y) - [x^(lam/2) g(x)]) kern(y) dy, using y = u^2."""
        U = np.sqrt(0.5 * x)
        cuts = [U * 2.0**-j for j in range(1, nsplit + 1)]
        cuts += [np.sqrt(x - c) for c in self.cuts if 0.5 * x < c < x]
        cuts += [u for u in extra_u if 0 < u < U]
        u, wu = _gauss(_pieces(0.0, U, cuts), self.q)
        y = u * u
        c = wu * 2.0 * u * kern(y)
        zz = x - y
        self.add(i, zz, c * zz ** (lam / 2))
        if subtract:
            self.diag(i, -x ** (lam / 2) * float(np.sum(c)))


def _difference_kernel_singular(y):
    return y**-1.5


@lru_cache(maxsize=64)
def _matrix(kind: str, grid: GradedGrid, profile: Profile, eps: float = 0.0,
            R: float = 1.0) -> np.ndarray:
    p = profile.params
    lam = p.lam
    B = _Builder(grid)
    x_all = grid.nodes
    fbreaks = profile.breakpoints
    ks = KernelSpec("background", profile)
    I_tot = profile.moment_total if kind == "calL" else 0.0

    for i, x in enumerate(x_all):
        if kind in ("L", "L_eps"):
            B.span(i, 0.0, x / 2, lambda y: ((x - y) ** -1.5 - x**-1.5) * y ** (lam / 2))
            if kind == "L" or eps == 0.0:
                kern = _difference_kernel_singular
                extra = ()
            else:
                c = eps**1.5 * x**1.5
                kern = lambda y, c=c: 1.0 / (y**1.5 + c)
                us = np.sqrt(eps * x)
                extra = (us / 2, us, 2 * us)
            B.difference(i, x, kern, lam, extra_u=extra)
            B.span(i, x / 2, np.inf, lambda y: -(x**-1.5) * y ** (lam / 2))
            B.diag(i, -2 * SQ2 * x ** ((lam - 1) / 2))

        elif kind == "calL":
            F0 = lambda u: u ** (lam / 2) * profile.f0(u)
            B.span(i, 0.0, x / 2, lambda y: F0(x - y) * y ** (lam / 2),
                   extra=[x - b for b in fbreaks])
            B.difference(i, x, F0, lam, subtract=False,
                         extra_u=[np.sqrt(b) for b in fbreaks])
            B.span(i, 0.0, np.inf, lambda y: -F0(x) * y ** (lam / 2))
            B.diag(i, -x ** (lam / 2) * I_tot)

        elif kind == "A1":
            H = ks.H
            Hx = float(H(x))
            B.span(i, 0.0, x / 2, lambda y: (H(x - y) - Hx) * y ** (lam / 2),
                   extra=[x - b for b in fbreaks])
            B.span(i, x / 2, np.inf, lambda y: -Hx * y ** (lam / 2))
            tailH = profile.moment_tail(x / 2) - 2.0 * (x / 2) ** -0.5
            B.diag(i, -x ** (lam / 2) * tailH)

        elif kind == "A2":
            c = eps**1.5 * x**1.5
            kern = lambda y, c=c: ks.background(y) - 1.0 / (y**1.5 + c)
            extra = [np.sqrt(b) for b in fbreaks]
            if eps > 0:
                us = np.sqrt(eps * x)
                extra += [us / 2, us, 2 * us]
            B.difference(i, x, kern, lam, extra_u=extra)

        elif kind in ("W_R", "W_inf", "W_inf_eps"):
            if kind == "W_R":
                kern = lambda y: ks.background(y, R)
                extra = [np.sqrt(b / R) for b in fbreaks] + [np.sqrt(1.0 / R)]
            elif kind == "W_inf" or eps == 0.0:
                kern, extra = _difference_kernel_singular, []
            else:
                c = eps**1.5 * x**1.5
                kern = lambda y, c=c: 1.0 / (y**1.5 + c)
                us = np.sqrt(eps * x)
                extra = [us / 2, us, 2 * us]
            B.difference(i, x, kern, lam, extra_u=extra)
        else:
            raise ValueError(kind)
    M = B.build()
    M.setflags(write=False)
    return M


@lru_cache(maxsize=16)
def _remainder_matrix(grid: GradedGrid, profile: Profile, chi: SmoothCutoff) -> np.ndarray:
    lam = profile.params.lam
    B = _Builder(grid)
    F0 = lambda u: u ** (lam / 2) * profile.f0(u)
    fb = profile.breakpoints
    for i, x in enumerate(grid.nodes):
        cx = float(chi(x))
        if cx != 0.0:
            F0x = float(F0(x))
            B.span(i, 0.0, x / 2, lambda y: cx * (F0(x - y) - F0x) * y ** (lam / 2),
                   extra=[x - b for b in fb])
            B.diag(i, -x ** (lam / 2) * cx * profile.moment_tail(x / 2))
            B.span(i, x / 2, np.inf, lambda y: -F0x * cx * y ** (lam / 2))
        kern = lambda y: (cx - chi(x - y)) * F0(y)
        B.difference(i, x, kern, lam, subtract=False,
                     extra_u=[np.sqrt(b) for b in fb] +
                     [np.sqrt(x - c) for c in chi.breakpoints if 0 < x - c < x / 2])
    M = B.build()
    M.setflags(write=False)
    return M


def operator_matrix(kind: str, grid: GradedGrid, profile: Profile, eps: float = 0.0,
                    R: float = 1.0) -> np.ndarray:
    """Dense matrix of an operator on ``grid``.

    kind: ``L``, ``L_eps``, ``calL``, ``A1``, ``A2``, ``W_R``, ``W_inf``,
    ``W_inf_eps``.
    """
    return _matrix(kind, grid, profile, float(eps), float(R))


def _apply(kind, g: Field, profile, **kw) -> Field:
    M = operator_matrix(kind, g.grid, profile, **kw)
    return g.with_values(M @ g.values)


def apply_L(g: Field, profile: Profile) -> Field:
    """Linearisation around the singular power law."""
    return _apply("L", g, profile)


def apply_L_eps(g: Field, profile: Profile, eps: float) -> Field:
    """L with the second kernel regularised to 1/(y^3/2 + eps^3/2 x^3/2)."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    if eps == 0:
        return apply_L(g, profile)
    return _apply("L_eps", g, profile, eps=eps)


def apply_cal_L(g: Field, profile: Profile) -> Field:
    """Linearisation around the bounded background profile f0."""
    return _apply("calL", g, profile)


def apply_A1(phi: Field, profile: Profile) -> Field:
    return _apply("A1", phi, profile)


def apply_A2eps(phi: Field, profile: Profile, eps: float = 0.0) -> Field:
    return _apply("A2", phi, profile, eps=eps)


def apply_Wcal(h: Field, profile: Profile, variant: str = "inf", R: float = 1.0,
               eps: float = 0.0) -> Field:
    """Localised difference operators; variant in {'R', 'inf', 'inf_eps'}."""
    kind = {"R": "W_R", "inf": "W_inf", "inf_eps": "W_inf_eps"}[variant]
    return _apply(kind, h, profile, eps=eps, R=R)


def apply_localized_remainder(g: Field, chi: SmoothCutoff, profile: Profile) -> Field:
    """Four-term remainder produced when the equation is multiplied by chi.

    With ``W1 = apply_Wcal(., variant='R', R=1)`` the identity
    chi * calL(g) = W1(chi g) + remainder(g) holds at every node.
    """
    M = _remainder_matrix(g.grid, profile, chi)
    return g.with_values(M @ g.values)


def truncation_estimate(g: Field, profile: Profile) -> np.ndarray:
    """Per-node size of the contributions lost below 2^Jmin and above 2^Jmax.

    The field is extended as a power law matched to its end values, which
    uses the decay x^-3/2 at 0 and x^-(3+lam)/2 at infinity.
    """
    grid = g.grid
    lam = profile.params.lam
    x = grid.nodes
    lo, hi = grid.lo, grid.hi
    g_lo = abs(g.values[0]) * (x[0] / lo) ** 1.5
    g_hi = abs(g.values[-1]) * (x[-1] / hi) ** ((3 + lam) / 2)
    # int_0^lo y^(lam/2) * g_lo (y/lo)^-3/2 dy and the tail beyond hi
    low = g_lo * lo ** (lam / 2 + 1) / (lam / 2 - 0.5)
    high = g_hi * hi ** (lam / 2 + 1) / 1.5
    return low * x**-1.5 + high * x**-1.5


# ---------------------------------------------------------------------------
# T_{eps,R} on a uniform periodic mesh


@lru_cache(maxsize=32)
def _t_weights(grid: PeriodicGrid, profile: Profile, eps: float, R: float,
               reach: float) -> np.ndarray:
    """Folded circulant weights C with (T f)_i = sum_j C_j f_{i-j}.

    f is interpolated linearly between nodes and integrated exactly against
    Phi on each cell [m h, (m+1) h] for y < ``reach``; beyond that only the
    non-oscillatory part (mean(f) - f(x)) * int Phi is kept.
    """
    h, N = grid.h, grid.N
    M = int(np.ceil(reach / h))
    a = h * np.arange(M, dtype=float)
    b = a + h
    alpha = np.zeros(M)
    beta = np.zeros(M)
    if eps > 0:
        # closed forms for y^-3/2 against (1 - s) and s, s = (y - a)/h
        I1 = np.empty(M)
        Iy = np.empty(M)
        I1[1:] = 2.0 * (a[1:] ** -0.5 - b[1:] ** -0.5)
        Iy[1:] = 2.0 * (np.sqrt(b[1:]) - np.sqrt(a[1:]))
        bt = (Iy[1:] - a[1:] * I1[1:]) / h
        beta[1:] += eps * bt
        alpha[1:] += eps * (I1[1:] - bt)
        beta[0] += eps * 2.0 * np.sqrt(h) / h  # int_0^h (y/h) y^-3/2 dy
    if eps < 1:
        lam = profile.params.lam
        s, w = _gl01(8)
        bg = lambda y: R ** ((3 + lam) / 2) * y ** (lam / 2) * profile.f0(R * y)
        chunk = 1 << 17
        for st in range(0, M, chunk):
            aa = a[st:st + chunk, None]
            y = aa + h * s[None, :]
            v = bg(y) * (h * w[None, :])
            beta[st:st + chunk] += (1 - eps) * (v * s[None, :]).sum(axis=1)
            alpha[st:st + chunk] += (1 - eps) * (v * (1 - s[None, :])).sum(axis=1)
    Y = M * h
    tail = eps * 2.0 * Y**-0.5
    if eps < 1:
        tail += (1 - eps) * np.sqrt(R) * profile.moment_tail(R * Y)
    C = np.zeros(M + 2)
    C[0] = -beta[0] - np.sum(alpha[1:] + beta[1:]) - tail
    C[1] += beta[0]
    C[1:M] += alpha[1:]
    C[2:M + 1] += beta[1:]
    folded = np.zeros(N)
    np.add.at(folded, np.arange(M + 2) % N, C)
    # beyond the reach a periodic field contributes its mean
    folded += tail / N
    return folded


def apply_T(f: Field, profile: Profile, eps: float, R: float = 1.0,
            reach: float | None = None) -> Field:
    """T(f)(x) = int_0^inf (f(x-y) - f(x)) Phi(y, R, eps) dy (dissipative sign).

    ``f`` lives on a ``PeriodicGrid``; the direct-space sum is evaluated as a
    circular convolution with the folded quadrature weights.
    """
    grid = f.grid
    if not isinstance(grid, PeriodicGrid):
        raise TypeError("apply_T needs a field on a PeriodicGrid")
    reach = 64.0 * grid.length if reach is None else reach
    C = _t_weights(grid, profile, float(eps), float(R), float(reach))
    out = np.fft.irfft(np.fft.rfft(C) * np.fft.rfft(f.values), n=grid.N)
    return f.with_values(out)


def apply_TM(f: Field, profile: Profile, eps: float, R: float = 1.0) -> Field:
    """T applied to x^(lam/2) f; f must vanish for x <= 0."""
    x = f.grid.nodes
    lam = profile.params.lam
    if np.any(f.values[x <= 0] != 0):
        raise ValueError("field must vanish for x <= 0")
    m = np.where(x > 0, np.abs(x) ** (lam / 2), 0.0) * f.values
    return apply_T(f.with_values(m), profile, eps, R)


def support_overflow(f: Field, tol: float = 1e-12) -> bool:
    """True when a periodic field is not negligible at the mesh ends."""
    v = np.abs(f.values)
    n = max(1, len(v) // 16)
    return bool(max(v[:n].max(), v[-n:].max()) > tol * max(v.max(), 1e-300))


def symmetrization_defect(g: Field, profile: Profile) -> tuple[float, float]:
    """int x calL(g) dx and the scale int x |calL(g)| dx.

    The first vanishes when f0 and g have compact support, since the
    first moment is conserved.
    """
    Lg = apply_cal_L(g, profile).values
    x = g.grid.nodes
    return g.grid.integrate(x * Lg), g.grid.integrate(x * np.abs(Lg))
