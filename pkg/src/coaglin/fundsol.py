"""Fundamental solution of L from a narrow Gaussian, scaling and tail checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import FieldSeries, GradedGrid, ModelParams, Profile, build_grid, canonical_profile
from .norms import norm_report
from .solver import SolveConfig, evolve


def Phi(xi):
    """Interior profile 1 / (1 + |xi|^(3/2 - delta)) with delta = 0 by default."""
    return 1.0 / (1.0 + np.abs(np.asarray(xi, dtype=float)) ** 1.5)


def scaled_variable(t, x, lam: float):
    """sigma_scaled = t^(2/(lam-1)) x."""
    return np.asarray(t, dtype=float) ** (2.0 / (lam - 1)) * np.asarray(x, dtype=float)


@dataclass
class FundSolResult:
    x0: float
    w: float
    times: np.ndarray
    g: FieldSeries
    dt: float
    under_resolved: bool
    convergence: float | None = None
    fits: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"x0": self.x0, "w": self.w, "times": [float(t) for t in self.times],
                "dt": self.dt, "under_resolved": self.under_resolved,
                "convergence": self.convergence, "fits": self.fits,
                "grid": self.g.grid.to_dict()}

    def long_rows(self):
        x = self.g.grid.nodes
        return [(float(t), float(xx), float(v)) for t, row in zip(self.g.times, self.g.values)
                for xx, v in zip(x, row)]


def gaussian_data(grid: GradedGrid, x0: float, w: float) -> np.ndarray:
    """Gaussian of width w at x0 with unit discrete mass."""
    g = np.exp(-0.5 * ((grid.nodes - x0) / w) ** 2)
    return g / grid.integrate(g)


def resolves(grid: GradedGrid, x0: float, w: float, min_nodes: int = 8) -> bool:
    x = grid.nodes
    return int(np.sum(np.abs(x - x0) <= 2 * w)) >= min_nodes


def compute_fundamental(x0: float, w: float, times, grid: GradedGrid, profile: Profile,
                        dt: float | None = None, convergence: bool = False) -> FundSolResult:
    """Evolve dg/dt = L g from a unit-mass Gaussian at x0 (theta = 0, eps = 0).

    ``convergence`` repeats the run with w/2 and records the sup relative
    change of g at the last time over [0.1 x0, 10 x0].
    """
    if w > x0 / 50 * (1 + 1e-12):
        raise ValueError("need w <= x0/50")
    times = np.asarray(sorted(times), dtype=float)
    T = float(times[-1])
    cfg = SolveConfig(profile, grid, theta=0.0, eps=0.0, T=T, dt=dt, richardson=False)
    h0 = gaussian_data(grid, x0, w)
    res = evolve(cfg, None, h0=h0, save_times=times)
    g = res.series
    out = FundSolResult(float(x0), float(w), g.times, g, res.dt, not resolves(grid, x0, w))
    if convergence:
        other = evolve(cfg, None, h0=gaussian_data(grid, x0, w / 2), save_times=times).series
        x = grid.nodes
        m = (x >= 0.1 * x0) & (x <= 10 * x0)
        a, b = g.values[-1, m], other.values[-1, m]
        out.convergence = float(np.max(np.abs(a - b)) / np.max(np.abs(b)))
    return out


def _lookup(r: FundSolResult, t: float) -> np.ndarray:
    j = int(np.argmin(np.abs(r.g.times - t)))
    if abs(r.g.times[j] - t) > 1e-9 * max(1.0, t):
        raise ValueError(f"time {t} not stored")
    return r.g.values[j]


def check_selfsimilar(r1: FundSolResult, r2: FundSolResult, t: float, lam: float,
                      window=(0.1, 10.0), floor: float = 1e-3) -> dict:
    """Compare g(t, x, x0') with (1/s) g(t s^((lam-1)/2), x/s, x0) for s = x0'/x0.

    r2 is evaluated at time t and r1 at the matched time. The relative
    deviation uses max(|ref|, floor * max|ref|) as denominator so sign
    changes of g do not dominate.
    """
    s = r2.x0 / r1.x0
    t1 = t * s ** ((lam - 1) / 2)
    g2 = _lookup(r2, t)
    g1 = _lookup(r1, t1)
    grid2 = r2.g.grid
    x = grid2.nodes
    m = (x >= window[0]) & (x <= window[1])
    ref = r1.g.grid.interpolate(g1, x[m] / s) / s
    got = g2[m]
    den = np.maximum(np.abs(ref), floor * np.max(np.abs(ref)))
    dev = np.abs(got - ref) / den
    return {"deviation": float(np.max(dev)), "t": t, "t_matched": t1, "scale": s,
            "argmax_x": float(x[m][np.argmax(dev)])}


def _loglog_fit(x: np.ndarray, y: np.ndarray) -> dict:
    if len(x) < 3:
        raise ValueError("fit window underflow: fewer than 3 nodes")
    if np.any(y <= 0):
        raise ValueError("fit window contains non-positive values")
    lx, ly = np.log(x), np.log(y)
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    dof = max(len(x) - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    se = float(np.sqrt(cov[0, 0]))
    return {"slope": float(coef[0]), "intercept": float(coef[1]),
            "residual": float(np.sqrt(np.mean(resid**2))), "stderr": se,
            "ci95": [float(coef[0] - 1.96 * se), float(coef[0] + 1.96 * se)], "n": int(len(x))}


def check_tail_bounds(r: FundSolResult, t: float, lam: float,
                      small=(0.01, 0.1), large=(4.0, 64.0)) -> dict:
    """Log-log slopes of g(t, ., x0) on fixed windows plus the interior profile."""
    g = _lookup(r, t)
    x = r.g.grid.nodes
    out = {"t": t}
    for name, (a, b) in (("small", small), ("large", large)):
        m = (x >= a) & (x <= b)
        out[name] = _loglog_fit(x[m], np.abs(g[m])) | {"window": [a, b],
                                                        "positive": bool(np.all(g[m] > 0))}
    m = (x > 0.5 * r.x0) & (x < 2 * r.x0)
    xi = (x[m] - r.x0) / t**2
    out["interior"] = {"xi": xi.tolist(), "scaled_g": (x[m] ** 1.5 * g[m] * t**2).tolist(),
                       "Phi": Phi(xi).tolist(), "Phi0": float(Phi(0.0))}
    if t >= 1:
        s = scaled_variable(t, x, lam)
        for name, mm in (("scaled_small", (s > 1e-2) & (s < 1)), ("scaled_large", (s > 1) & (s < 1e2))):
            if np.sum(mm) >= 3 and np.all(g[mm] > 0):
                out[name] = _loglog_fit(s[mm], g[mm])
    return out


def duhamel_exponent_test(params: ModelParams, grid: GradedGrid | None = None,
                          Ts=(1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0), nu=None,
                          profile: Profile | None = None, trim_blocks: int = 4) -> dict:
    """Fit the exponent b in sup_{t<=T} |||u(t)||| / ||nu||_X ~ T^b.

    u solves u_t = L u + nu, u(0) = 0; the default source is the
    time-independent min(x^-3/2, x^-(2+delta)). The weighted sup skips the
    top ``trim_blocks`` blocks, where truncation of the grid inflates
    x^((3+lam)/2) |u|.
    """
    profile = canonical_profile(params, check=False) if profile is None else profile
    grid = build_grid(-8, 18, 12) if grid is None else grid
    d = params.delta
    if nu is None:
        nu = lambda x, t: np.minimum(x**-1.5, x ** -(2 + d))
    Ts = np.asarray(Ts, dtype=float)
    cfg = SolveConfig(profile, grid, theta=0.0, eps=0.0, T=float(Ts[-1]), richardson=False)
    res = evolve(cfg, nu)
    fs = res.series
    x = grid.nodes
    nu_vals = np.stack([np.asarray(nu(x, t), dtype=float) * np.ones(grid.N) for t in fs.times])
    nus = FieldSeries(grid, fs.times, nu_vals)
    keep = x < 2.0 ** (grid.Jmax - trim_blocks)
    w = np.where(x <= 1, x**1.5, x**params.p_out)
    inner = x <= 1
    wu = w * np.abs(fs.values)
    trip = (wu[:, inner & keep].max(axis=1) if np.any(inner & keep) else 0.0) + \
        (wu[:, ~inner & keep].max(axis=1) if np.any(~inner & keep) else 0.0)
    rows = []
    for T in Ts:
        m = fs.times <= T + 1e-12
        u = float(np.max(trip[m]))
        nx = norm_report(nus, params, 1.5, 2 + d, T=float(T)).X
        rows.append({"T": float(T), "u": u, "nu_X": nx, "ratio": u / nx if nx > 0 else 0.0})
    r = np.array([row["ratio"] for row in rows])
    beta = min(1.0, 2 * d / (params.lam - 1))
    fit = _loglog_fit(Ts, r) if np.all(r > 0) else {"slope": float("nan")}
    return {"rows": rows, "fit": fit, "beta": beta, "dt": res.dt}
