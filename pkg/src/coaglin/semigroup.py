"""Frozen-coefficient multiplier semigroup, Duhamel sums and commutators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .core import Field, FieldSeries, GradedGrid, PeriodicGrid, Profile, SmoothCutoff
from .operators import apply_T
from .symbols import half_derivative_closed_form, symbol_W, wtilde_table


@dataclass(frozen=True, eq=False)
class FreezePoint:
    """Base point x0 and the (eps, R) pair fixing the symbol W.

    ``symbol_fn`` overrides W(k) entirely; it is meant for tests with model
    symbols such as W = 0.
    """

    x0: float
    eps: float
    R: float
    profile: Profile
    symbol_fn: Callable | None = None

    def __post_init__(self):
        if not self.x0 > 0:
            raise ValueError("x0 must be positive")
        if not 0 <= self.eps <= 1:
            raise ValueError("eps must lie in [0, 1]")
        if self.R < 1:
            raise ValueError("R must be >= 1")

    @property
    def scale(self) -> float:
        return self.x0 ** (self.profile.params.lam / 2)

    def symbol(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        if self.symbol_fn is not None:
            return np.asarray(self.symbol_fn(k), dtype=complex)
        if self.eps == 1:
            return half_derivative_closed_form(k)
        return symbol_W(k, self.eps, self.R, self.profile, wt=wtilde_table(self.profile))

    def exponent(self, k) -> np.ndarray:
        """x0^(lam/2) W(k)."""
        return self.scale * self.symbol(k)

    def multiplier(self, t: float, k) -> np.ndarray:
        return np.exp(t * self.exponent(k))


@dataclass(frozen=True)
class SemigroupInfo:
    wraparound: float
    flagged: bool
    mesh: PeriodicGrid


def _wrap_level(u: np.ndarray) -> float:
    """Largest |u| in the outer eighths of the mesh relative to max |u|."""
    u = np.abs(u)
    n = max(1, u.shape[-1] // 8)
    edge = max(u[..., :n].max(), u[..., -n:].max())
    return float(edge / max(u.max(), 1e-300))


def padded_mesh(grid: GradedGrid, values: np.ndarray, N: int = 2**14, pad: float = 4.0,
                rel_tol: float = 1e-14) -> PeriodicGrid:
    """Uniform mesh of length pad x (support width), support centred."""
    if pad < 4:
        raise ValueError("padding factor must be >= 4")
    v = np.abs(np.atleast_2d(values)).max(axis=0)
    nz = np.nonzero(v > rel_tol * max(v.max(), 1e-300))[0]
    if len(nz) == 0:
        s0, s1 = grid.lo, grid.hi
    else:
        b0 = grid.block_of(grid.nodes[nz[0]])
        b1 = grid.block_of(grid.nodes[nz[-1]])
        s0, s1 = 2.0 ** float(b0), 2.0 ** float(b1 + 1)
    width = s1 - s0
    return PeriodicGrid(s0 - 0.5 * (pad - 1) * width, pad * width, int(N))


def to_uniform(grid: GradedGrid, values: np.ndarray, mesh: PeriodicGrid) -> np.ndarray:
    return np.atleast_2d(values) @ grid.interp_matrix(mesh.nodes).T


def from_uniform(mesh: PeriodicGrid, U: np.ndarray, grid: GradedGrid) -> np.ndarray:
    """Cubic resampling from the uniform mesh back to graded nodes (0 outside)."""
    U = np.atleast_2d(U)
    xs = mesh.nodes
    x = grid.nodes
    inside = (x >= xs[0]) & (x <= xs[-1])
    out = np.zeros((U.shape[0], grid.N))
    if inside.any():
        out[:, inside] = CubicSpline(xs, U, axis=1)(x[inside])
    return out


def _apply_multiplier(U: np.ndarray, mesh: PeriodicGrid, mult: np.ndarray) -> np.ndarray:
    return np.fft.irfft(np.fft.rfft(U, axis=-1) * mult, n=mesh.N, axis=-1)


def semigroup_apply(f: Field, t: float, fp: FreezePoint, N: int = 2**14, pad: float = 4.0,
                    return_info: bool = False, wrap_tol: float = 1e-8):
    """S(t) f = F^-1[exp(t x0^(lam/2) W(k)) F f].

    Periodic fields are transformed directly. Graded fields are resampled on a
    padded uniform mesh and brought back by cubic interpolation.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if isinstance(f.grid, PeriodicGrid):
        mesh = f.grid
        U = f.values
    else:
        mesh = padded_mesh(f.grid, f.values, N, pad)
        U = to_uniform(f.grid, f.values, mesh)[0]
    k = 2 * np.pi * np.fft.rfftfreq(mesh.N, d=mesh.h)
    V = _apply_multiplier(U, mesh, fp.multiplier(t, k))
    wrap = _wrap_level(V)
    vals = V if isinstance(f.grid, PeriodicGrid) else from_uniform(mesh, V, f.grid)[0]
    out = f.with_values(vals, t=f.t + t)
    if return_info:
        return out, SemigroupInfo(wrap, wrap > wrap_tol, mesh)
    return out


def _duhamel_uniform(U: np.ndarray, times: np.ndarray, mesh: PeriodicGrid,
                     fp: FreezePoint) -> np.ndarray:
    dt = np.diff(times)
    if len(dt) and not np.allclose(dt, dt[0], rtol=1e-10, atol=0):
        raise ValueError("duhamel needs a uniform time mesh")
    k = 2 * np.pi * np.fft.rfftfreq(mesh.N, d=mesh.h)
    z = fp.exponent(k)
    H = np.fft.rfft(U, axis=-1)
    out = np.zeros_like(H)
    if len(dt):
        d = dt[0]
        full, half = np.exp(d * z), np.exp(0.5 * d * z)
        for n in range(len(dt)):
            hmid = 0.5 * (H[n] + H[n + 1])
            out[n + 1] = full * out[n] + d * half * hmid
    return np.fft.irfft(out, n=mesh.N, axis=-1)


def duhamel(hs: FieldSeries, fp: FreezePoint, N: int = 2**14, pad: float = 4.0) -> FieldSeries:
    """u(t_n) = int_0^t_n S(t_n - s) h(s) ds, midpoint rule with exact multipliers."""
    if isinstance(hs.grid, PeriodicGrid):
        vals = _duhamel_uniform(hs.values, hs.times, hs.grid, fp)
        return FieldSeries(hs.grid, hs.times, vals)
    mesh = padded_mesh(hs.grid, hs.values, N, pad)
    U = to_uniform(hs.grid, hs.values, mesh)
    V = _duhamel_uniform(U, hs.times, mesh, fp)
    return FieldSeries(hs.grid, hs.times, from_uniform(mesh, V, hs.grid))


def sobolev_sq(values: np.ndarray, mesh: PeriodicGrid, s: float) -> np.ndarray:
    """Squared H^s norm with weight (1+k^2)^s, Plancherel normalised."""
    F = np.fft.fft(np.atleast_2d(values), axis=-1)
    k = mesh.k
    return (mesh.h / mesh.N) * np.sum((1 + k * k) ** s * np.abs(F) ** 2, axis=-1)


def maximal_regularity_constant(hs: FieldSeries, fp: FreezePoint, sigma: float) -> float:
    """sup_n ||u(t_n)||^2_{H^sigma} / int_0^T ||h||^2_{H^sigma} dt on a periodic mesh."""
    if not isinstance(hs.grid, PeriodicGrid):
        raise TypeError("needs a series on a PeriodicGrid")
    u = duhamel(hs, fp)
    num = float(np.max(sobolev_sq(u.values, hs.grid, sigma)))
    den = float(np.trapezoid(sobolev_sq(hs.values, hs.grid, sigma), hs.times))
    return num / den if den > 0 else 0.0


def commutator_apply(h: Field, eta: SmoothCutoff, eps: float, R: float, profile: Profile) -> Field:
    """[eta, T] h = eta T(h) - T(eta h) with the quadrature form of T."""
    e = eta(h.grid.nodes)
    Th = apply_T(h, profile, eps, R).values
    Teh = apply_T(h.with_values(e * h.values), profile, eps, R).values
    return h.with_values(e * Th - Teh)


def commutator_smoothing_constant(hs, eta: SmoothCutoff, fp: FreezePoint, sigma: float,
                                  beta: float = 0.25, rho: float | None = None,
                                  times=None) -> dict:
    """Sampled sup of t^beta ||S(t)[eta,T]h||_{H^sigma} / ||h||_{H^(sigma-rho)}."""
    rho = beta / 4 if rho is None else rho
    times = np.geomspace(1e-3, 1.0, 13) if times is None else np.asarray(times, dtype=float)
    worst = 0.0
    rows = []
    for h in hs:
        mesh = h.grid
        c = commutator_apply(h, eta, fp.eps, fp.R, fp.profile)
        den = np.sqrt(sobolev_sq(h.values, mesh, sigma - rho))[0]
        for t in times:
            st = semigroup_apply(c, float(t), fp)
            num = np.sqrt(sobolev_sq(st.values, mesh, sigma))[0]
            r = float(t**beta * num / den)
            rows.append((float(t), r))
            worst = max(worst, r)
    return {"C": worst, "beta": beta, "rho": rho, "samples": rows}
