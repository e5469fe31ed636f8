"""Time integration of h_t = (1-theta) L_eps h + theta calL h + mu with h(0) = h0.

The local damping a_tot(x) = (1-theta) 2 sqrt2 x^((lam-1)/2) + theta x^(lam/2) I
(I the total moment of f0) is removed by the integrating factor; the
remaining nonlocal part is advanced with an exponential RK2 step. A second
scheme uses the matrix exponential of the whole operator.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .core import Field, FieldSeries, GradedGrid, ModelParams, Profile
from .norms import norm_E, norm_report
from .operators import operator_matrix

SQ2 = np.sqrt(2.0)
BLOWUP = 1e12


class SolverBlowUp(RuntimeError):
    """Raised when the solution exceeds the blow-up guard."""

    def __init__(self, msg: str, diagnostics: dict):
        super().__init__(msg)
        self.diagnostics = diagnostics


@dataclass(frozen=True, eq=False)
class SolveConfig:
    """theta, eps, scheme and time step for one run on ``grid``.

    ``dt = None`` picks min(0.25 / max a_tot, half the probed stability bound).
    """

    profile: Profile
    grid: GradedGrid
    theta: float = 0.0
    eps: float = 0.0
    T: float = 1.0
    dt: float | None = None
    scheme: str = "imex"
    richardson: bool = True

    def __post_init__(self):
        if not 0 <= self.theta <= 1 or not 0 <= self.eps <= 1:
            raise ValueError("theta and eps must lie in [0, 1]")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.scheme not in ("imex", "exponential"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.dt is not None:
            if self.dt <= 0:
                raise ValueError("dt must be positive")
            if self.dt > stability_bound(self) * (1 + 1e-12):
                raise ValueError("dt exceeds the probed stability bound")

    @property
    def params(self) -> ModelParams:
        return self.profile.params

    def to_dict(self) -> dict:
        return {"theta": self.theta, "eps": self.eps, "T": self.T, "dt": self.resolved_dt(),
                "scheme": self.scheme, "grid": self.grid.to_dict()}

    def resolved_dt(self) -> float:
        return default_dt(self) if self.dt is None else float(self.dt)


# ---------------------------------------------------------------------------
# operator pieces


def damping_coefficient(x, eps: float, R: float, profile: Profile):
    """c0(eps, R, x) = x^(lam/2) int_{x/2}^inf Phi(y, R, eps) dy."""
    x = np.asarray(x, dtype=float)
    lam = profile.params.lam
    tail = eps * 2 * SQ2 * x**-0.5
    if eps < 1:
        mt = np.vectorize(profile.moment_tail)(R * x / 2)
        tail = tail + (1 - eps) * np.sqrt(R) * mt
    return x ** (lam / 2) * tail


def local_damping(grid: GradedGrid, profile: Profile, theta: float) -> np.ndarray:
    x = grid.nodes
    lam = profile.params.lam
    return (1 - theta) * 2 * SQ2 * x ** ((lam - 1) / 2) + theta * x ** (lam / 2) * profile.moment_total


def system_matrix(grid: GradedGrid, profile: Profile, theta: float, eps: float) -> np.ndarray:
    """(1-theta) L_eps + theta calL as a dense matrix."""
    M = np.zeros((grid.N, grid.N))
    if theta < 1:
        kind = "L" if eps == 0 else "L_eps"
        M += (1 - theta) * operator_matrix(kind, grid, profile, eps=eps)
    if theta > 0:
        M += theta * operator_matrix("calL", grid, profile)
    return M


@lru_cache(maxsize=32)
def _split(grid: GradedGrid, profile: Profile, theta: float, eps: float):
    M = system_matrix(grid, profile, theta, eps)
    a = local_damping(grid, profile, theta)
    E = M + np.diag(a)
    M.setflags(write=False)
    E.setflags(write=False)
    a.setflags(write=False)
    return M, a, E


@lru_cache(maxsize=32)
def _spectral_radius(grid: GradedGrid, profile: Profile, theta: float, eps: float) -> float:
    E = _split(grid, profile, theta, eps)[2]
    return float(np.max(np.abs(np.linalg.eigvals(E))))


def stability_bound(cfg: SolveConfig) -> float:
    """Dry-run probe: 2 / spectral radius of the explicit part."""
    if cfg.scheme == "exponential":
        return np.inf
    return 2.0 / _spectral_radius(cfg.grid, cfg.profile, float(cfg.theta), float(cfg.eps))


def default_dt(cfg: SolveConfig) -> float:
    a = local_damping(cfg.grid, cfg.profile, cfg.theta)
    dt = 0.25 / float(np.max(a))
    return min(dt, 0.5 * stability_bound(cfg))


def integrating_factor(a_values, s: float, t: float, times=None) -> np.ndarray:
    """exp(-int_s^t a) per node; a is (N,) constant in time or (nt, N) on ``times``."""
    if s > t:
        raise ValueError("need s <= t")
    a = np.asarray(a_values, dtype=float)
    if a.ndim == 1:
        return np.exp(-(t - s) * a)
    times = np.asarray(times, dtype=float)
    inner = (times > s) & (times < t)
    ts = np.concatenate([[s], times[inner], [t]])
    vals = np.stack([np.array([np.interp(tt, times, col) for col in a.T]) for tt in ts])
    return np.exp(-np.trapezoid(vals, ts, axis=0))


# ---------------------------------------------------------------------------
# sources


def _source(mu, grid: GradedGrid) -> Callable[[float], np.ndarray]:
    if mu is None:
        zero = np.zeros(grid.N)
        return lambda t: zero
    if isinstance(mu, FieldSeries):
        if mu.grid is not grid and not np.array_equal(mu.grid.nodes, grid.nodes):
            raise ValueError("source lives on a different grid")
        ts, vs = mu.times, mu.values

        def src(t):
            j = int(np.searchsorted(ts, t))
            if j < len(ts) and abs(ts[j] - t) <= 1e-12 * max(1.0, abs(t)):
                return vs[j]
            if j == 0:
                return vs[0]
            if j >= len(ts):
                return vs[-1]
            w = (t - ts[j - 1]) / (ts[j] - ts[j - 1])
            return (1 - w) * vs[j - 1] + w * vs[j]
        return src
    if callable(mu):
        x = grid.nodes
        return lambda t: np.asarray(mu(x, t), dtype=float) * np.ones(grid.N)
    raise TypeError("mu must be None, a FieldSeries or a callable mu(x, t)")


def _step_times(T: float, dt: float, save_times) -> tuple[np.ndarray, np.ndarray]:
    """Step mesh hitting every save time, and indices of saved steps."""
    if save_times is None:
        n = max(1, int(np.ceil(T / dt - 1e-9)))
        mesh = np.linspace(0.0, T, n + 1)
        return mesh, np.arange(n + 1)
    st = np.unique(np.concatenate([[0.0], np.asarray(save_times, dtype=float)]))
    if st[-1] > T * (1 + 1e-12) or st[0] < 0:
        raise ValueError("save times must lie in [0, T]")
    mesh = [0.0]
    keep = [0]
    for a, b in zip(st[:-1], st[1:]):
        n = max(1, int(np.ceil((b - a) / dt - 1e-9)))
        mesh.extend(np.linspace(a, b, n + 1)[1:])
        keep.append(len(mesh) - 1)
    return np.array(mesh), np.array(keep)


# ---------------------------------------------------------------------------
# integrators


def _guard(h: np.ndarray, t: float, step: int):
    m = float(np.max(np.abs(h)))
    if not np.isfinite(m) or m > BLOWUP:
        raise SolverBlowUp(f"solution exceeded {BLOWUP:g} at t={t:.6g}",
                           {"t": t, "step": step, "max_abs": m,
                            "argmax": int(np.argmax(np.abs(np.nan_to_num(h, nan=np.inf))))})


def _run_imex(cfg: SolveConfig, src, h0: np.ndarray, mesh: np.ndarray, keep: np.ndarray) -> np.ndarray:
    _, a, E = _split(cfg.grid, cfg.profile, float(cfg.theta), float(cfg.eps))
    out = np.empty((len(keep), cfg.grid.N))
    h = h0.copy()
    out[0] = h
    k = 1
    cache = {}
    mu_prev = src(mesh[0])
    for n in range(len(mesh) - 1):
        t0, t1 = mesh[n], mesh[n + 1]
        dt = t1 - t0
        key = round(dt, 14)
        if key not in cache:
            w = np.exp(-a * dt)
            p1 = -np.expm1(-a * dt) / a
            p2 = (dt * a - 1 + w) / (a * a * dt)
            cache[key] = (w, p1, p2)
        w, p1, p2 = cache[key]
        mu_next = src(t1)
        n1 = E @ h + mu_prev
        hs = w * h + p1 * n1
        n2 = E @ hs + mu_next
        h = hs + p2 * (n2 - n1)
        mu_prev = mu_next
        _guard(h, t1, n + 1)
        if k < len(keep) and keep[k] == n + 1:
            out[k] = h
            k += 1
    return out


def _phi_blocks(A: np.ndarray):
    """exp(A), phi1(A), phi2(A) from one augmented exponential."""
    N = A.shape[0]
    I = np.eye(N)
    Z = np.zeros((N, N))
    big = np.block([[A, I, Z], [Z, Z, I], [Z, Z, Z]])
    F = expm(big)
    return F[:N, :N], F[:N, N:2 * N], F[:N, 2 * N:]


def _run_exponential(cfg: SolveConfig, src, h0, mesh, keep) -> np.ndarray:
    M = _split(cfg.grid, cfg.profile, float(cfg.theta), float(cfg.eps))[0]
    out = np.empty((len(keep), cfg.grid.N))
    h = h0.copy()
    out[0] = h
    k = 1
    cache = {}
    mu_prev = src(mesh[0])
    for n in range(len(mesh) - 1):
        dt = mesh[n + 1] - mesh[n]
        key = round(dt, 14)
        if key not in cache:
            eA, f1, f2 = _phi_blocks(M * dt)
            cache[key] = (eA, dt * f1, dt * f2)
        eA, f1, f2 = cache[key]
        mu_next = src(mesh[n + 1])
        # source linear in time across the step
        h = eA @ h + f1 @ mu_prev + f2 @ (mu_next - mu_prev)
        mu_prev = mu_next
        _guard(h, mesh[n + 1], n + 1)
        if k < len(keep) and keep[k] == n + 1:
            out[k] = h
            k += 1
    return out


@dataclass
class SolveResult:
    series: FieldSeries
    dt: float
    nsteps: int
    richardson_error: float | None
    config: SolveConfig = field(repr=False)

    def to_dict(self) -> dict:
        return {"dt": self.dt, "nsteps": self.nsteps, "richardson_error": self.richardson_error,
                **{k: v for k, v in self.config.to_dict().items() if k != "dt"}}


def _integrate(cfg: SolveConfig, src, h0, dt, save_times):
    mesh, keep = _step_times(cfg.T, dt, save_times)
    run = _run_imex if cfg.scheme == "imex" else _run_exponential
    return mesh, keep, run(cfg, src, h0, mesh, keep)


def evolve(cfg: SolveConfig, mu=None, h0=None, save_times=None) -> SolveResult:
    """Solve on [0, T]; ``mu`` is None, a FieldSeries or a callable mu(x, t).

    The Richardson estimate compares the run with one at dt/2 on the saved
    times. For a second-order scheme the error of the returned (dt) run is
    2^2 / (2^2 - 1) times that difference.
    """
    grid = cfg.grid
    src = _source(mu, grid)
    h0v = np.zeros(grid.N) if h0 is None else np.asarray(
        h0.values if isinstance(h0, Field) else h0, dtype=float)
    dt = cfg.resolved_dt()
    mesh, keep, vals = _integrate(cfg, src, h0v, dt, save_times)
    err = None
    if cfg.richardson:
        _, _, fine = _integrate(cfg, src, h0v, dt / 2, save_times if save_times is not None
                                else mesh)
        scale = max(float(np.max(np.abs(vals))), 1e-300)
        err = float(np.max(np.abs(vals - fine))) * 4.0 / 3.0 / scale
    series = FieldSeries(grid, mesh[keep], vals)
    return SolveResult(series, dt, len(mesh) - 1, err, cfg)


# ---------------------------------------------------------------------------
# continuation and fixed point


@dataclass
class ContinuationReport:
    rows: list
    nonuniform: bool
    spread: float

    def to_dict(self) -> dict:
        return {"rows": self.rows, "nonuniform": self.nonuniform, "spread": self.spread}


def source_series(mu, grid: GradedGrid, times) -> FieldSeries:
    if isinstance(mu, FieldSeries):
        return mu
    src = _source(mu, grid)
    times = np.asarray(times, dtype=float)
    return FieldSeries(grid, times, np.stack([src(t) for t in times]))


def continuation_sweep(theta_grid, mu, base: SolveConfig, save_times=None) -> ContinuationReport:
    """Solve at every theta and record |||h||| / ||mu||_{Y^sigma_{3/2,2+delta}}."""
    thetas = [float(t) for t in theta_grid]
    if any(b <= a for a, b in zip(thetas[:-1], thetas[1:])) or thetas[0] < 0 or thetas[-1] > 1:
        raise ValueError("theta grid must be increasing inside [0, 1]")
    p = base.params
    rows = []
    mu_norm = None
    for th in thetas:
        res = evolve(replace(base, theta=th), mu, save_times=save_times)
        if mu_norm is None:
            ms = source_series(mu, base.grid, res.series.times)
            mu_norm = norm_report(ms, p, 1.5, 2 + p.delta, T=base.T).Y
        hn = norm_E(res.series, p, T=base.T)
        if mu_norm == 0.0:
            ratio, note = 0.0, "zero solution" if hn == 0.0 else "zero source"
        else:
            ratio, note = hn / mu_norm, ""
        rows.append({"theta": th, "h_norm": hn, "mu_norm": mu_norm, "ratio": ratio,
                     "dt": res.dt, "richardson_error": res.richardson_error, "note": note})
    r = [row["ratio"] for row in rows if row["ratio"] > 0]
    spread = max(r) / min(r) if r else 1.0
    return ContinuationReport(rows, spread > 3.0, spread)


@dataclass
class FixedPointReport:
    distances: list
    factors: list
    contraction: float
    diverged: bool
    residual: float
    iterate: FieldSeries = field(repr=False)

    def to_dict(self) -> dict:
        return {"distances": self.distances, "factors": self.factors,
                "contraction": self.contraction, "diverged": self.diverged,
                "residual": self.residual}


def fixed_point_iterate(theta: float, theta_n: float, eps: float, mu, phi_init,
                        base: SolveConfig, n_iter: int = 8) -> FixedPointReport:
    """Iterate phi -> solve[(1-theta_n) L + theta_n calL, source (theta-theta_n)(calL-L_eps) phi + mu].

    ``phi_init`` is None (zero) or a FieldSeries on the step mesh of ``base``.
    Distances are measured in the energy norm. Successive ratios shrink
    because the map is of Volterra type, so the Lipschitz estimate is the
    largest observed ratio.
    """
    if not theta_n <= theta <= 1:
        raise ValueError("need theta_n <= theta <= 1")
    grid = base.grid
    p = base.params
    cfg = replace(base, theta=theta_n, eps=0.0, richardson=False)
    dt = cfg.resolved_dt()
    mesh, _ = _step_times(cfg.T, dt, None)
    cfg = replace(cfg, dt=dt)
    coupling = operator_matrix("calL", grid, base.profile) - operator_matrix(
        "L" if eps == 0 else "L_eps", grid, base.profile, eps=eps)
    mu_s = source_series(mu, grid, mesh)
    phi = np.zeros((len(mesh), grid.N)) if phi_init is None else np.asarray(
        phi_init.values, dtype=float)
    dists, factors = [], []
    diverged = False
    grow = 0
    for _ in range(n_iter):
        src = FieldSeries(grid, mesh, mu_s.values + (theta - theta_n) * phi @ coupling.T)
        new = evolve(cfg, src).series.values
        d = norm_E(FieldSeries(grid, mesh, new - phi), p, T=cfg.T)
        if dists:
            factors.append(d / dists[-1] if dists[-1] > 0 else 0.0)
            grow = grow + 1 if d > dists[-1] else 0
            if grow >= 3:
                diverged = True
        dists.append(d)
        phi = new
        if diverged or d == 0.0:
            break
    contraction = float(max(factors)) if factors else 0.0
    scale = norm_E(FieldSeries(grid, mesh, phi), p, T=cfg.T)
    residual = dists[-1] / scale if scale > 0 else 0.0
    return FixedPointReport(dists, factors, contraction, diverged, residual,
                            FieldSeries(grid, mesh, phi))
