"""Weighted sup norms, dyadic space-time norms and the bracket seminorm.

Fractional derivatives on an interval I are computed by multiplying the
field with a plateau window (plateau I, support twice as wide on a log
scale), resampling onto a uniform periodic mesh and applying |k|^s in
Fourier space. Suprema over continuous (R, t0) are taken over dyadic R and
the block time mesh t0 = j R^(-(lam-1)/2), so every aggregate is a lower
bound for the continuous one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .core import Field, FieldSeries, GradedGrid, ModelParams, eta_cutoff, make_cutoff

_M = 1024


def norm_triple_qp(phi: Field | np.ndarray, q: float, p: float, grid: GradedGrid | None = None) -> float:
    """sup_{x<=1} x^q |phi| + sup_{x>1} x^p |phi| over grid nodes."""
    if isinstance(phi, Field):
        grid, v = phi.grid, phi.values
    else:
        v = np.asarray(phi)
    x = grid.nodes
    inner = x <= 1.0
    a = np.max(x[inner] ** q * np.abs(v[..., inner]), axis=-1) if inner.any() else 0.0
    b = np.max(x[~inner] ** p * np.abs(v[..., ~inner]), axis=-1) if (~inner).any() else 0.0
    return a + b


# ---------------------------------------------------------------------------
# windowed fractional derivatives


@lru_cache(maxsize=256)
def _window_resampler(grid: GradedGrid, a: float, b: float, M: int):
    """Matrix mapping node values to the windowed field on a uniform mesh.

    Window: plateau [a, b], support [a/2, 2b]. The periodic mesh spans twice
    the support length so the windowed field sits in zero padding.
    """
    w = make_cutoff(a / 2, a, b, 2 * b)
    lo = a / 2
    length = 2.0 * (2 * b - lo)
    h = length / M
    xs = lo - 0.25 * length + h * np.arange(M)
    E = grid.interp_matrix(xs) * w(xs)[:, None]
    k = 2 * np.pi * np.fft.rfftfreq(M, d=h)
    E.setflags(write=False)
    return E, k, h


def _spectral_energy(U: np.ndarray, k: np.ndarray, h: float, weight: np.ndarray) -> np.ndarray:
    """Plancherel-normalised sum of weight(k) |U_hat|^2 along the last axis."""
    M = U.shape[-1]
    F = np.fft.rfft(U, axis=-1)
    c = np.full(len(k), 2.0)
    c[0] = 1.0
    if M % 2 == 0:
        c[-1] = 1.0
    return (h / M) * np.sum(c * weight * np.abs(F) ** 2, axis=-1)


def frac_sobolev(f: Field, sigma: float, interval: tuple[float, float], M: int = _M,
                 return_flag: bool = False):
    """|| D^sigma (w f) ||_L2 with w a plateau window adapted to ``interval``.

    sigma = 0 gives the L2 norm of the windowed field. The flag is set when
    more than 1e-6 of the spectral energy sits in the top quarter of the mesh
    frequencies, which signals under-resolution.
    """
    a, b = interval
    E, k, h = _window_resampler(f.grid, float(a), float(b), M)
    U = E @ f.values
    val = float(np.sqrt(_spectral_energy(U, k, h, k ** (2 * sigma))))
    if not return_flag:
        return val
    tot = _spectral_energy(U, k, h, np.ones_like(k))
    top = _spectral_energy(U, k, h, (k > 0.75 * k[-1]).astype(float))
    return val, bool(top > 1e-6 * max(tot, 1e-300))


def _dsigma_sq(fs: FieldSeries, sigma: float, R: float, M: int = _M) -> np.ndarray:
    E, k, h = _window_resampler(fs.grid, R / 2, 2 * R, M)
    U = fs.values @ E.T
    return _spectral_energy(U, k, h, k ** (2 * sigma))


def _sup_block(fs: FieldSeries, R: float) -> np.ndarray:
    x = fs.grid.nodes
    m = (x >= R / 2) & (x <= 2 * R)
    return np.max(np.abs(fs.values[:, m]), axis=1)


def _time_integral(times: np.ndarray, q: np.ndarray, a: float, b: float) -> float:
    """Trapezoid integral over [a, b] of the piecewise-linear interpolant of q."""
    if b <= a:
        return 0.0
    inner = (times > a) & (times < b)
    ts = np.concatenate([[a], times[inner], [b]])
    qs = np.interp(ts, times, q)
    return float(np.trapezoid(qs, ts))


def block_radii(grid: GradedGrid) -> np.ndarray:
    """Dyadic R with [R/4, 4R] inside the grid range."""
    return 2.0 ** np.arange(grid.Jmin + 2, grid.Jmax - 1)


def block_times(R: float, lam: float, T: float) -> np.ndarray:
    step = R ** (-(lam - 1) / 2)
    n = int(np.floor(T / step - 1e-12)) + 1
    return step * np.arange(n)


def dyadic_norms(fs: FieldSeries, sigma: float, t0: float, R: float, params: ModelParams,
                 T: float | None = None, _cache: dict | None = None) -> dict:
    """N_inf, N_2sigma on the window starting at t0 and M_inf, M_2sigma on [0, T]."""
    lam = params.lam
    T = min(params.T, fs.times[-1]) if T is None else T
    key = ("blk", R, sigma)
    if _cache is not None and key in _cache:
        sup2, ds2 = _cache[key]
    else:
        sup2 = _sup_block(fs, R) ** 2
        ds2 = _dsigma_sq(fs, sigma, R)
        if _cache is not None:
            _cache[key] = (sup2, ds2)
    t1 = min(t0 + R ** (-(lam - 1) / 2), T)
    if t1 <= t0:
        raise ValueError("empty time window")
    a = (lam - 1) / 2
    return {
        "N_inf": np.sqrt(R**a * _time_integral(fs.times, sup2, t0, t1)),
        "N_2sigma": np.sqrt(R ** (a + 2 * sigma - 1) * _time_integral(fs.times, ds2, t0, t1)),
        "M_inf": np.sqrt(_time_integral(fs.times, sup2, 0.0, T)),
        "M_2sigma": np.sqrt(R ** (2 * sigma - 1) * _time_integral(fs.times, ds2, 0.0, T)),
    }


@dataclass
class NormReport:
    blocks: list = field(default_factory=list)
    X: float = 0.0
    Y: float = 0.0
    triple_sup: float = 0.0
    E: float = 0.0
    bracket: float | None = None
    q: float = 1.5
    p: float = 2.25

    def block_rows(self):
        return [(b["R"], b["t0"], b["N_inf"], b["N_2sigma"], b["M_inf"], b["M_2sigma"])
                for b in self.blocks]

    def to_dict(self) -> dict:
        return {"X": self.X, "Y": self.Y, "triple_sup": self.triple_sup, "E": self.E,
                "bracket": self.bracket, "q": self.q, "p": self.p,
                "nblocks": len(self.blocks)}


def norm_report(fs: FieldSeries, params: ModelParams, q: float, p: float,
                sigma: float | None = None, T: float | None = None,
                with_bracket: bool = False) -> NormReport:
    """All block values and the X / Y aggregates with exponents (q, p).

    The inner exponent q weights blocks with R < 1 and p the blocks R >= 1.
    """
    sigma = params.sigma if sigma is None else sigma
    T = min(params.T, fs.times[-1]) if T is None else T
    cache: dict = {}
    rep = NormReport(q=q, p=p)
    X_in = X_out = Y_in = Y_out = 0.0
    for R in block_radii(fs.grid):
        t0s = block_times(R, params.lam, T) if R >= 1 else np.array([0.0])
        for t0 in t0s:
            v = dyadic_norms(fs, sigma, float(t0), float(R), params, T, cache)
            rep.blocks.append({"R": float(R), "t0": float(t0), **{k: float(x) for k, x in v.items()}})
            if R < 1:
                X_in = max(X_in, R**q * v["M_inf"])
                Y_in = max(Y_in, R**q * v["M_2sigma"])
            else:
                X_out = max(X_out, R**p * v["N_inf"])
                Y_out = max(Y_out, R**p * v["N_2sigma"])
    rep.X = float(X_in + X_out)
    rep.Y = float(Y_in + Y_out)
    mask = fs.times <= T + 1e-12
    rep.triple_sup = float(np.max(norm_triple_qp(fs.values[mask], 1.5, params.p_out, fs.grid)))
    rep.E = rep.triple_sup + rep.Y
    if with_bracket:
        rep.bracket = bracket_seminorm(fs, sigma, T, params)
    return rep


def norm_X(fs: FieldSeries, params: ModelParams, q: float, p: float, T: float | None = None) -> float:
    return norm_report(fs, params, q, p, T=T).X


def norm_Y(fs: FieldSeries, params: ModelParams, q: float, p: float, sigma: float | None = None,
           T: float | None = None) -> float:
    return norm_report(fs, params, q, p, sigma=sigma, T=T).Y


def norm_E(fs: FieldSeries, params: ModelParams, sigma: float | None = None,
           T: float | None = None) -> float:
    """sup_t |||f(t)|||_{3/2,(3+lam)/2} + ||f||_{Y^sigma_{3/2,(3+lam)/2}}."""
    return norm_report(fs, params, 1.5, params.p_out, sigma=sigma, T=T).E


# ---------------------------------------------------------------------------
# bracket seminorm


@lru_cache(maxsize=128)
def _bracket_resampler(grid: GradedGrid, R: float, M: int):
    eta = eta_cutoff()
    length = 8.0
    h = length / M
    X = h * np.arange(M) - 2.0
    E = grid.interp_matrix(R * X) * eta(X)[:, None]
    k = 2 * np.pi * np.fft.rfftfreq(M, d=h)
    E.setflags(write=False)
    return E, k, h


def bracket_seminorm(fs: FieldSeries, sigma: float, T: float, params: ModelParams,
                     M: int = _M, unbounded: bool = False, return_blocks: bool = False):
    """sup over dyadic R >= 1 and block times t0 of the windowed Fourier functional.

    The weight is 1 + |k|^(2 sigma) min(|k|, R); ``unbounded`` drops the min,
    which is the R -> infinity variant.
    """
    lam = params.lam
    T = min(T, fs.times[-1])
    best = 0.0
    rows = []
    grid = fs.grid
    for R in 2.0 ** np.arange(0, grid.Jmax - 1):
        if 4 * R > grid.hi:
            break
        E, k, h = _bracket_resampler(grid, float(R), M)
        U = fs.values @ E.T
        wk = 1.0 + k ** (2 * sigma) * (k if unbounded else np.minimum(k, R))
        q = _spectral_energy(U, k, h, wk)
        for t0 in block_times(R, lam, T):
            t1 = min(t0 + R ** (-(lam - 1) / 2), T)
            val = R ** ((3 + lam) / 2) * np.sqrt(_time_integral(fs.times, q, t0, t1))
            rows.append((float(R), float(t0), float(val)))
            best = max(best, float(val))
    return (best, rows) if return_blocks else best
