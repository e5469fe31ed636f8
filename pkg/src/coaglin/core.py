"""Parameters, smooth cutoffs, background profiles and the graded dyadic grid."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special


@dataclass(frozen=True)
class ModelParams:
    """Exponent and regularity bundle shared by every module."""

    lam: float = 1.5
    sigma: float = 0.75
    delta: float = 1.0
    gamma: float = 0.5
    A: float = 1.0
    B: float = 10.0
    T: float = 1.0
    theta: float = 0.0
    eps: float = 0.0

    def __post_init__(self):
        checks = [
            (1.0 < self.lam < 2.0, "lam must lie in (1, 2)"),
            (0.5 < self.sigma < 1.0, "sigma must lie in (1/2, 1)"),
            (0.0 < self.gamma < 1.0, "gamma must lie in (0, 1)"),
            (self.delta > 0.0, "delta must be positive"),
            (self.A > 0.0, "A must be positive"),
            (self.B > 0.0, "B must be positive"),
            (0.0 < self.T <= 1.0, "T must lie in (0, 1]"),
            (0.0 <= self.theta <= 1.0, "theta must lie in [0, 1]"),
            (0.0 <= self.eps <= 1.0, "eps must lie in [0, 1]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    @property
    def p_out(self) -> float:
        """Decay exponent (3+lam)/2 of the power-law background."""
        return 0.5 * (3.0 + self.lam)

    def replace(self, **kw) -> "ModelParams":
        d = asdict(self)
        d.update(kw)
        return ModelParams(**d)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# smooth cutoffs


def _psi(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_transition(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    a = _psi(t)
    b = _psi(1.0 - t)
    return a / (a + b)


def smooth_step(x, a: float, b: float):
    """0 for x <= a, 1 for x >= b, smooth in between."""
    return smooth_transition((np.asarray(x, dtype=float) - a) / (b - a))


@dataclass(frozen=True)
class SmoothCutoff:
    """Compactly supported plateau function: 0 outside (a, d), 1 on [b, c]."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if not (self.a < self.b <= self.c < self.d):
            raise ValueError("cutoff breakpoints must satisfy a < b <= c < d")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        up = smooth_transition((x - self.a) / (self.b - self.a))
        down = smooth_transition((self.d - x) / (self.d - self.c))
        return up * down

    @property
    def breakpoints(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)


def make_cutoff(a: float, b: float, c: float, d: float) -> SmoothCutoff:
    return SmoothCutoff(float(a), float(b), float(c), float(d))


def chi_cutoff(R: float) -> SmoothCutoff:
    """Localising cutoff around x = R: plateau R +- R/8, support R +- R/4."""
    return make_cutoff(R - R / 4, R - R / 8, R + R / 8, R + R / 4)


def eta_cutoff() -> SmoothCutoff:
    """Window used by the bracket seminorm: plateau (3/4, 5/4), support (1/8, 4)."""
    return make_cutoff(0.125, 0.75, 1.25, 4.0)


# ---------------------------------------------------------------------------
# background profile


@dataclass(frozen=True)
class Profile:
    """Background datum f0 with its derivative.

    ``moment_tail(a)`` returns the integral of y^(lam/2) f0(y) over (a, inf);
    ``breakpoints`` lists points where f0 is not smooth, so quadrature can
    split there.
    """

    params: ModelParams
    f0: Callable[[np.ndarray], np.ndarray]
    f0_prime: Callable[[np.ndarray], np.ndarray]
    moment_tail_fn: Callable[[float], float] | None = None
    breakpoints: tuple[float, ...] = ()
    name: str = "custom"

    def xi(self, x):
        return smooth_step(x, 0.5, 1.0)

    def h0(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        with np.errstate(divide="ignore"):
            tail = np.where(x > 0, p.A * np.abs(x) ** (-p.p_out), 0.0)
        return self.f0(x) - tail * self.xi(x)

    def h0_prime(self, x, rel_step: float = 1e-6):
        x = np.asarray(x, dtype=float)
        p = self.params
        # derivative of A x^{-p} xi(x) by product rule, xi' by central differences
        hstep = rel_step * np.maximum(x, 1.0)
        dxi = (self.xi(x + hstep) - self.xi(x - hstep)) / (2 * hstep)
        with np.errstate(divide="ignore"):
            pw = p.A * x ** (-p.p_out)
            dpw = -p.p_out * p.A * x ** (-p.p_out - 1.0)
        return self.f0_prime(x) - (dpw * self.xi(x) + pw * dxi)

    def moment_tail(self, a: float) -> float:
        """Integral of y^(lam/2) f0(y) dy over (a, inf)."""
        if self.moment_tail_fn is not None:
            return float(self.moment_tail_fn(a))
        lam = self.params.lam
        g = lambda y: y ** (lam / 2) * float(self.f0(np.array([y]))[0])
        pts = sorted(b for b in self.breakpoints if b > a)
        edges = [a] + pts
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            total += integrate.quad(g, lo, hi, limit=200, epsabs=1e-14, epsrel=1e-12)[0]
        total += integrate.quad(g, edges[-1], np.inf, limit=200, epsabs=1e-14, epsrel=1e-12)[0]
        return total

    @property
    def moment_total(self) -> float:
        """Integral of y^(lam/2) f0(y) over (0, inf)."""
        return self.moment_tail(0.0)

    def decay_report(self, delta: float | None = None, ymax: float = 1e4, n: int = 400) -> dict:
        """Sampled sup of the two weighted decay quantities of h0 and h0'."""
        p = self.params
        d = p.delta if delta is None else delta
        y = np.geomspace(1e-3, ymax, n)
        s0 = np.max(y ** (p.p_out + d) * np.abs(self.h0(y)))
        s1 = np.max(y ** (p.p_out + 1 + d) * np.abs(self.h0_prime(y)))
        return {"delta": d, "sup_h0": float(s0), "sup_h0_prime": float(s1)}

    def holder_report(self, gamma: float | None = None, delta: float | None = None) -> dict:
        """Hoelder seminorms of h0' by divided differences at lag x/100."""
        p = self.params
        g = p.gamma if gamma is None else gamma
        d = p.delta if delta is None else delta
        out = {}
        x = np.linspace(0.01, 1.0, 200)
        lag = x / 100
        dd = np.abs(self.h0_prime(x + lag) - self.h0_prime(x)) / lag**g
        out["local"] = float(np.max(dd))
        worst = 0.0
        for R in 2.0 ** np.arange(0, 12):
            x = np.linspace(R / 2, 2 * R, 60)
            lag = x / 100
            dd = np.abs(self.h0_prime(x + lag) - self.h0_prime(x)) / lag**g
            worst = max(worst, R ** (p.p_out + g + d) * float(np.max(dd)))
        out["dyadic"] = worst
        return out


def _canonical_moment_tail(params: ModelParams):
    lam = params.lam
    pa = (lam + 2.0) / 4.0
    qa = 0.25
    full = 0.5 * special.beta(pa, qa)

    def tail(a: float) -> float:
        if a <= 0:
            return params.A * full
        s = a * a / (1.0 + a * a)
        # complementary regularised incomplete beta keeps precision at large a
        return params.A * full * special.betainc(qa, pa, 1.0 - s)

    return tail


def canonical_profile(params: ModelParams, check: bool = True) -> Profile:
    """f0(x) = A (1+x^2)^(-(3+lam)/4)."""
    A = params.A
    e = params.p_out / 2.0

    def f0(x):
        x = np.asarray(x, dtype=float)
        return A * (1.0 + x * x) ** (-e)

    def f0p(x):
        x = np.asarray(x, dtype=float)
        return -2.0 * e * A * x * (1.0 + x * x) ** (-e - 1.0)

    prof = Profile(params, f0, f0p, _canonical_moment_tail(params), (), "canonical")
    if check:
        rep = prof.decay_report(delta=min(params.delta, 2.0))
        if max(rep["sup_h0"], rep["sup_h0_prime"]) > params.B:
            raise ValueError(f"canonical profile violates the decay bound: {rep}")
    return prof


def bump_profile(params: ModelParams, a: float = 1.0, b: float = 2.0, amp: float = 1.0) -> Profile:
    """Compactly supported polynomial bump f0 = amp (x-a)^4 (b-x)^4 on [a, b]."""
    scale = amp * (2.0 / (b - a)) ** 8

    def f0(x):
        x = np.asarray(x, dtype=float)
        inside = (x > a) & (x < b)
        return np.where(inside, scale * (x - a) ** 4 * (b - x) ** 4, 0.0)

    def f0p(x):
        x = np.asarray(x, dtype=float)
        inside = (x > a) & (x < b)
        v = 4 * (x - a) ** 3 * (b - x) ** 4 - 4 * (x - a) ** 4 * (b - x) ** 3
        return np.where(inside, scale * v, 0.0)

    lam = params.lam

    def tail(lo: float) -> float:
        lo = max(lo, a)
        if lo >= b:
            return 0.0
        g = lambda y: y ** (lam / 2) * scale * (y - a) ** 4 * (b - y) ** 4
        return integrate.quad(g, lo, b, epsabs=1e-15, epsrel=1e-13)[0]

    return Profile(params, f0, f0p, tail, (a, b), "bump")


# ---------------------------------------------------------------------------
# graded grid


def _barycentric_weights(t: np.ndarray) -> np.ndarray:
    n = len(t)
    w = np.ones(n)
    for j in range(n):
        d = t[j] - np.delete(t, j)
        w[j] = 1.0 / np.prod(d * 2.0)  # scaled to avoid underflow
    return w / np.max(np.abs(w))


@dataclass(frozen=True, eq=False)
class GradedGrid:
    """Gauss-Legendre nodes, P per dyadic block [2^n, 2^(n+1)), Jmin <= n < Jmax."""

    Jmin: int
    Jmax: int
    P: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    ref_nodes: np.ndarray = field(repr=False)
    ref_weights: np.ndarray = field(repr=False)
    bary: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.nodes)

    @property
    def nblocks(self) -> int:
        return self.Jmax - self.Jmin

    @property
    def lo(self) -> float:
        return 2.0**self.Jmin

    @property
    def hi(self) -> float:
        return 2.0**self.Jmax

    def block_slice(self, n: int) -> slice:
        k = n - self.Jmin
        return slice(k * self.P, (k + 1) * self.P)

    def block_of(self, z) -> np.ndarray:
        """Dyadic block index n with 2^n <= z < 2^(n+1); exact at powers of two."""
        m, e = np.frexp(np.asarray(z, dtype=float))
        return e - 1

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    def interp_matrix(self, z) -> np.ndarray:
        """Dense matrix E with E @ values = piecewise interpolant at z (0 outside)."""
        from . import kernels

        z = np.atleast_1d(np.asarray(z, dtype=float))
        E = np.zeros((len(z), self.N))
        kernels.accumulate(E, np.arange(len(z)), z, np.ones(len(z)), self)
        return E

    def interpolate(self, values, z) -> np.ndarray:
        return self.interp_matrix(z) @ np.asarray(values, dtype=float)

    def checksum(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.nodes).tobytes()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {"Jmin": self.Jmin, "Jmax": self.Jmax, "P": self.P, "N": self.N,
                "checksum": self.checksum()}


def build_grid(Jmin: int, Jmax: int, P: int) -> GradedGrid:
    if not Jmin < Jmax:
        raise ValueError("need Jmin < Jmax")
    if P < 4:
        raise ValueError("need at least 4 nodes per block")
    t, w = np.polynomial.legendre.leggauss(P)
    nodes, weights = [], []
    for n in range(Jmin, Jmax):
        a = 2.0**n
        nodes.append(a * (1.5 + 0.5 * t))
        weights.append(a * 0.5 * w)
    return GradedGrid(int(Jmin), int(Jmax), int(P), np.concatenate(nodes),
                      np.concatenate(weights), t, w, _barycentric_weights(t))


@dataclass(frozen=True, eq=False)
class PeriodicGrid:
    """Uniform periodic mesh on [x0, x0 + length) used by multiplier computations."""

    x0: float
    length: float
    N: int

    @property
    def h(self) -> float:
        return self.length / self.N

    @property
    def nodes(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.N)

    @property
    def k(self) -> np.ndarray:
        """Angular FFT frequencies."""
        return 2 * np.pi * np.fft.fftfreq(self.N, d=self.h)

    def to_dict(self) -> dict:
        return {"x0": self.x0, "length": self.length, "N": self.N}


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class Field:
    grid: GradedGrid | PeriodicGrid
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.N,):
            raise ValueError("one value per node required")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid, fn: Callable, t: float = 0.0) -> "Field":
        return cls(grid, np.asarray(fn(grid.nodes), dtype=float), t)

    def with_values(self, values, t: float | None = None) -> "Field":
        return Field(self.grid, values, self.t if t is None else t)


@dataclass(frozen=True, eq=False)
class FieldSeries:
    """Time-indexed fields sharing one grid; ``values`` has shape (nt, N)."""

    grid: GradedGrid | PeriodicGrid
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(t), self.grid.N):
            raise ValueError("values must have shape (len(times), N)")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("series values must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.times)

    def field(self, i: int) -> Field:
        return Field(self.grid, self.values[i], float(self.times[i]))

    @classmethod
    def from_function(cls, grid, times: Sequence[float], fn: Callable) -> "FieldSeries":
        times = np.asarray(times, dtype=float)
        vals = np.stack([np.asarray(fn(grid.nodes, t), dtype=float) for t in times])
        return cls(grid, times, vals)

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation in time."""
        return np.array([np.interp(t, self.times, col) for col in self.values.T])


def manifest(params: ModelParams | None = None, grid=None, **extra) -> str:
    """JSON text describing a computation reproducibly."""
    doc = {}
    if params is not None:
        doc["params"] = params.to_dict()
    if grid is not None:
        doc["grid"] = grid.to_dict()
    doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True, default=float)
