"""Acceptance suite shared by ``coaglin verify`` and the test-suite.

Each check returns a :class:`CheckResult` and writes its artifacts under the
output directory. Artifacts contain no timings or paths, so two runs with the
same configuration produce byte-identical files.
"""

from __future__ import annotations

import filecmp
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate

from .artifacts import write_csv, write_json
from .core import (Field, ModelParams, PeriodicGrid, build_grid, bump_profile,
                   canonical_profile)
from .fundsol import check_selfsimilar, check_tail_bounds, compute_fundamental, duhamel_exponent_test
from .norms import bracket_seminorm, norm_report
from .operators import apply_A1, apply_T, operator_matrix, symmetrization_defect
from .solver import SolveConfig, continuation_sweep, evolve, fixed_point_iterate, source_series
from .symbols import (SQRT2PI, build_symbol_grid, half_derivative_closed_form,
                      half_derivative_integral, symbol_W, wtilde, wtilde_table)


@dataclass
class CheckResult:
    id: int
    name: str
    passed: bool
    value: float
    threshold: str
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.id:2d} {self.name}: value={self.value:.6g} ({self.threshold})"

    def to_dict(self) -> dict:
        return {"id": self.id, "name": self.name, "passed": self.passed, "value": self.value,
                "threshold": self.threshold, "detail": self.detail}


def _params() -> ModelParams:
    return ModelParams()


# ---------------------------------------------------------------------------
# 1-4: symbols


def check_half_derivative(out: Path) -> CheckResult:
    rows, worst = [], 0.0
    for z in (1.0, 4.0, 9.0):
        q = half_derivative_integral(z)
        ref = complex(half_derivative_closed_form(z))
        err = abs(q - ref)
        worst = max(worst, err)
        rows.append((z, q.real, q.imag, ref.real, ref.imag, err))
    write_csv(out / "c01_half_derivative.csv", ["z", "re", "im", "ref_re", "ref_im", "abs_err"], rows)
    return CheckResult(1, "half-derivative constant", worst <= 1e-6, worst, "abs err <= 1e-6")


def check_wtilde_limits(out: Path) -> CheckResult:
    p = _params()
    prof = canonical_profile(p)
    z0, z1 = 1e-3, 1e3
    ratio = wtilde(z0, prof) / ((1 + 1j) * np.sqrt(z0))
    target = -SQRT2PI
    dev_small = abs(ratio - target) / abs(target)
    dev_small_re = abs(ratio.real - target) / abs(target)
    # independent quadrature of the total moment
    f = lambda y: y ** (p.lam / 2) * float(prof.f0(np.array([y]))[0])
    oracle = integrate.quad(f, 0, 1, epsabs=1e-13, epsrel=1e-13)[0] + \
        integrate.quad(f, 1, np.inf, epsabs=1e-13, epsrel=1e-13, limit=400)[0]
    big = wtilde(z1, prof)
    dev_large = abs(big + oracle) / oracle
    rows = [(z0, ratio.real, ratio.imag, target, 0.0, dev_small),
            (z1, big.real, big.imag, -oracle, 0.0, dev_large)]
    write_csv(out / "c02_wtilde_limits.csv", ["z", "re", "im", "target_re", "target_im", "rel_dev"], rows)
    worst = max(dev_small, dev_large)
    return CheckResult(2, "W~ limits", worst <= 0.02, worst, "complex rel dev <= 2% at z=1e-3 and z=1e3",
                       {"small_z_rel_dev": dev_small, "small_z_real_part_rel_dev": dev_small_re,
                        "large_z_rel_dev": dev_large, "moment_oracle": oracle})


def check_symbol_sign(out: Path) -> CheckResult:
    prof = canonical_profile(_params())
    rows, viol, herm, w0 = [], 0, 0.0, 0.0
    for eps in (0.0, 0.5, 1.0):
        for R in (1.0, 8.0, 64.0):
            sg = build_symbol_grid(100.0, 100, eps, R, prof, method="quadrature")
            c = sg.check()
            viol += c["re_violations"]
            herm = max(herm, c["hermitian_err"])
            w0 = max(w0, c["W0"])
            rows.append((eps, R, c["max_re_nonzero"], c["re_violations"], c["hermitian_err"], c["W0"]))
    write_csv(out / "c03_symbol_sign.csv",
              ["eps", "R", "max_re_nonzero", "re_violations", "hermitian_err", "W0"], rows)
    ok = viol == 0 and herm == 0.0 and w0 == 0.0
    return CheckResult(3, "symbol sign and symmetry", ok, float(viol), "zero violations",
                       {"hermitian_err": herm, "W0": w0})


def check_multiplier_equivalence(out: Path) -> CheckResult:
    prof = canonical_profile(_params())
    mesh = PeriodicGrid(-32.0, 64.0, 2**14)
    f = Field.from_function(mesh, lambda x: np.exp(-x * x))
    F = np.fft.fft(f.values)
    wt = wtilde_table(prof)
    rows, worst = [], 0.0
    for eps in (0.0, 0.5, 1.0):
        for R in (1.0, 8.0, 64.0):
            direct = apply_T(f, prof, eps, R).values
            mult = np.fft.ifft(symbol_W(mesh.k, eps, R, prof, wt=wt) * F).real
            err = float(np.linalg.norm(direct - mult) / np.linalg.norm(mult))
            worst = max(worst, err)
            rows.append((eps, R, err))
    write_csv(out / "c04_multiplier.csv", ["eps", "R", "rel_l2_err"], rows)
    return CheckResult(4, "quadrature-multiplier equivalence", worst <= 1e-3, worst, "rel L2 err <= 1e-3")


# ---------------------------------------------------------------------------
# 5-6, 10: operators


def check_l_eps_rate(out: Path) -> CheckResult:
    prof = canonical_profile(_params())
    grid = build_grid(-8, 8, 16)
    g = np.exp(-4 * np.log(grid.nodes) ** 2)
    Lg = operator_matrix("L", grid, prof) @ g
    eps = 2.0 ** -np.arange(1, 9)
    errs = []
    for e in eps:
        d = operator_matrix("L_eps", grid, prof, eps=float(e)) @ g - Lg
        errs.append(np.sqrt(grid.integrate(d * d)))
    slope = float(np.polyfit(np.log(eps), np.log(errs), 1)[0])
    write_csv(out / "c05_l_eps_rate.csv", ["eps", "l2_err"], list(zip(eps, errs)))
    return CheckResult(5, "L_eps -> L rate", abs(slope - 0.5) <= 0.15, slope, "slope 0.5 +- 0.15")


def check_symmetrization(out: Path) -> CheckResult:
    prof = bump_profile(_params())
    grid = build_grid(-4, 4, 32)
    bump = lambda x: np.where((x > 0.5) & (x < 1.5), (4 * np.clip((x - 0.5) * (1.5 - x), 0, None)) ** 4, 0.0)
    v, scale = symmetrization_defect(Field.from_function(grid, bump), prof)
    rel = abs(v) / scale
    write_csv(out / "c06_symmetrization.csv", ["moment", "scale", "rel"], [(v, scale, rel)])
    return CheckResult(6, "symmetrization identity", rel <= 1e-8, rel, "|int x calL g| <= 1e-8 scale")


def check_a1_decay(out: Path) -> CheckResult:
    p = _params()
    prof = canonical_profile(p)
    grid = build_grid(-8, 10, 16)
    x = grid.nodes
    phi = Field.from_function(grid, lambda x: np.minimum(x**-1.5, x ** -p.p_out))
    A = apply_A1(phi, prof).values
    s = 2 + p.delta
    Xs = 2.0 ** np.arange(2, 7)
    sups = [float(np.max(x[(x >= 2) & (x <= X)] ** s * np.abs(A[(x >= 2) & (x <= X)]))) for X in Xs]
    slope = float(np.polyfit(np.log(Xs), np.log(sups), 1)[0])
    m = (x >= 2) & (x <= 64)
    raw = float(np.polyfit(np.log(x[m]), np.log(np.abs(A[m])), 1)[0])
    write_csv(out / "c10_a1_decay.csv", ["X", "running_sup"], list(zip(Xs, sups)))
    return CheckResult(10, "A1 decay", abs(slope) <= 0.15, slope,
                       "running-sup slope of x^(2+delta)|A1| within +-0.15 of 0",
                       {"raw_decay_slope": raw, "s": s})


# ---------------------------------------------------------------------------
# 7-9: fundamental solution


def _fundsol_pair(P: int = 24, Jmax: int = 10, dt: float = 0.004):
    p = _params()
    prof = canonical_profile(p)
    grid = build_grid(-10, Jmax, P)
    t = 0.25
    r1 = compute_fundamental(1.0, 0.02, [0.01, t * 2 ** ((p.lam - 1) / 2), 0.5], grid, prof, dt=dt)
    r2 = compute_fundamental(2.0, 0.04, [t], grid, prof, dt=dt)
    return p, r1, r2


def check_selfsimilarity(out: Path, cache: dict) -> CheckResult:
    p, r1, r2 = cache.setdefault("fundsol", _fundsol_pair())
    rep = check_selfsimilar(r1, r2, 0.25, p.lam)
    _, f1, f2 = _fundsol_pair(Jmax=11, dt=0.002)
    fine = check_selfsimilar(f1, f2, 0.25, p.lam)
    write_csv(out / "c07_selfsimilar.csv", ["level", "deviation"],
              [(0, rep["deviation"]), (1, fine["deviation"])])
    return CheckResult(7, "fundamental-solution self-similarity", rep["deviation"] <= 0.05,
                       rep["deviation"], "deviation <= 5% on [0.1, 10]",
                       {"refined_deviation": fine["deviation"],
                        "refinement_ratio": fine["deviation"] / rep["deviation"]})


def check_tails(out: Path, cache: dict) -> CheckResult:
    p, r1, _ = cache.setdefault("fundsol", _fundsol_pair())
    tb = check_tail_bounds(r1, 0.5, p.lam)
    s, l = tb["small"], tb["large"]
    ok = (abs(s["slope"] + 1.5) <= 0.1 and abs(l["slope"] + p.p_out) <= 0.1
          and s["residual"] < 0.05 and l["residual"] < 0.05)
    write_csv(out / "c08_tails.csv", ["window", "slope", "residual", "stderr", "target", "positive"],
              [("small", s["slope"], s["residual"], s["stderr"], -1.5, s["positive"]),
               ("large", l["slope"], l["residual"], l["stderr"], -p.p_out, l["positive"])])
    worst = max(abs(s["slope"] + 1.5), abs(l["slope"] + p.p_out))
    return CheckResult(8, "tail exponents", ok, worst, "|slope - target| <= 0.1, residual < 0.05",
                       {"small": s["slope"], "large": l["slope"], "small_positive": s["positive"]})


def check_duhamel_exponent(out: Path) -> CheckResult:
    p = _params()
    rows, ok, margin = [], True, np.inf
    detail = {}
    for d in (0.1, 1.0):
        rep = duhamel_exponent_test(p.replace(delta=d))
        b, slope = rep["beta"], rep["fit"]["slope"]
        ok &= slope >= b - 0.1
        margin = min(margin, slope - (b - 0.1))
        for r in rep["rows"]:
            rows.append((d, r["T"], r["u"], r["nu_X"], r["ratio"]))
        Ts = np.array([r["T"] for r in rep["rows"]])
        rs = np.array([r["ratio"] for r in rep["rows"]])
        detail[f"delta={d}"] = {"beta": b, "slope": slope, "residual": rep["fit"]["residual"],
                                "local_slopes": np.diff(np.log(rs)) / np.diff(np.log(Ts))}
    write_csv(out / "c09_duhamel.csv", ["delta", "T", "u_sup", "nu_X", "ratio"], rows)
    return CheckResult(9, "Duhamel exponent", bool(ok), float(margin),
                       "fitted exponent >= beta - 0.1 for delta in {0.1, 1}", detail)


# ---------------------------------------------------------------------------
# 11-13: solver


THETAS = (0.0, 0.25, 0.5, 0.75, 1.0)


def mu_family(c: float, delta: float) -> Callable:
    """Space-time bump centred at x = c with amplitude c^-(2+delta)."""
    return lambda x, t: np.sin(np.pi * t) ** 2 * np.exp(-4 * np.log(x / c) ** 2) * c ** -(2 + delta)


def _sweeps(cache: dict):
    if "sweeps" in cache:
        return cache["sweeps"]
    p = _params()
    prof = canonical_profile(p)
    out = {}
    for P in (16, 32):
        grid = build_grid(-8, 8, P)
        base = SolveConfig(prof, grid, T=p.T)
        for c in (0.5, 4.0):
            mu = mu_family(c, p.delta)
            rep = continuation_sweep(THETAS, mu, base)
            brk = []
            for th in (0.0, 1.0):
                res = evolve(replace(base, theta=th, richardson=False), mu)
                ms = source_series(mu, grid, res.series.times)
                my = norm_report(ms, p, 1.5, 2 + p.delta).Y
                brk.append(bracket_seminorm(res.series, p.sigma, p.T, p) / my)
            out[(P, c)] = (rep, brk)
    cache["sweeps"] = out
    return out


def check_theorem1(out: Path, cache: dict) -> CheckResult:
    sw = _sweeps(cache)
    rows, worst, spread = [], 1.0, 1.0
    for c in (0.5, 4.0):
        a, b = sw[(16, c)][0], sw[(32, c)][0]
        spread = max(spread, a.spread, b.spread)
        for ra, rb in zip(a.rows, b.rows):
            q = max(ra["ratio"] / rb["ratio"], rb["ratio"] / ra["ratio"])
            worst = max(worst, q)
            rows.append((c, ra["theta"], ra["ratio"], rb["ratio"], q))
    write_csv(out / "c11_theorem1.csv", ["c", "theta", "ratio_P16", "ratio_P32", "refinement_factor"], rows)
    ok = worst <= 1.2 and spread <= 3.0
    return CheckResult(11, "well-posedness ratio", ok, worst, "refinement factor <= 1.2, theta spread <= 3",
                       {"theta_spread": spread})


def check_theorem2(out: Path, cache: dict) -> CheckResult:
    sw = _sweeps(cache)
    rows, worst = [], 1.0
    for c in (0.5, 4.0):
        a, b = sw[(16, c)][1], sw[(32, c)][1]
        for th, ra, rb in zip((0.0, 1.0), a, b):
            q = max(ra / rb, rb / ra)
            worst = max(worst, q)
            rows.append((c, th, ra, rb, q))
    finite = all(np.isfinite(r[2]) and np.isfinite(r[3]) for r in rows)
    write_csv(out / "c12_theorem2.csv", ["c", "theta", "bracket_ratio_P16", "bracket_ratio_P32",
                                          "refinement_factor"], rows)
    return CheckResult(12, "regularising-effect ratio", finite and worst <= 1.5, worst,
                       "finite, refinement factor <= 1.5")


def check_contraction(out: Path) -> CheckResult:
    p = _params()
    prof = canonical_profile(p)
    base = SolveConfig(prof, build_grid(-8, 8, 16), T=p.T)
    mu = mu_family(1.0, p.delta)
    theta = 0.9
    gaps = (0.4, 0.2, 0.1)
    rows = []
    for gp in gaps:
        r = fixed_point_iterate(theta, theta - gp, 0.25, mu, None, base)
        rows.append((gp, r.contraction, r.residual, len(r.distances), r.diverged))
    fac = np.array([r[1] for r in rows])
    slope = float(np.polyfit(np.log(gaps), np.log(fac), 1)[0])
    decreasing = bool(np.all(np.diff(fac) < 0))
    write_csv(out / "c13_contraction.csv", ["gap", "factor", "residual", "iterations", "diverged"], rows)
    return CheckResult(13, "fixed-point contraction", decreasing and slope > 0, slope,
                       "factor decreasing with theta - theta_n, positive log-log slope",
                       {"factors": fac, "min_residual": min(r[2] for r in rows)})


# ---------------------------------------------------------------------------
# driver


CHECKS = (
    (1, check_half_derivative, False),
    (2, check_wtilde_limits, False),
    (3, check_symbol_sign, False),
    (4, check_multiplier_equivalence, False),
    (5, check_l_eps_rate, False),
    (6, check_symmetrization, False),
    (7, check_selfsimilarity, True),
    (8, check_tails, True),
    (9, check_duhamel_exponent, False),
    (10, check_a1_decay, False),
    (11, check_theorem1, True),
    (12, check_theorem2, True),
    (13, check_contraction, False),
)


def _run_group(out: Path, ids: tuple) -> list[CheckResult]:
    cache: dict = {}
    results = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for cid, fn, shared in CHECKS:
            if cid not in ids:
                continue
            res = fn(out, cache) if shared else fn(out)
            res.passed = bool(res.passed)
            res.value = float(res.value)
            results.append(res)
    return results


# checks sharing cached runs stay in one group
GROUPS = ((1,), (2,), (3,), (4,), (5,), (6,), (7, 8), (9,), (10,), (11, 12), (13,))


def run_checks(out, only=None, workers: int = 1) -> list[CheckResult]:
    """Run criteria 1-13 and write their artifacts to ``out``.

    With ``workers > 1`` independent groups run in separate processes; the
    artifacts do not depend on the worker count.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    groups = [tuple(i for i in g if only is None or i in only) for g in GROUPS]
    groups = [g for g in groups if g]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_run_group, [out] * len(groups), groups))
    else:
        parts = [_run_group(out, g) for g in groups]
    results = sorted((r for part in parts for r in part), key=lambda r: r.id)
    write_json(out / "results.json", [r.to_dict() for r in results])
    return results


def compare_dirs(a, b) -> list[str]:
    """Relative paths whose bytes differ (or exist on one side only)."""
    a, b = Path(a), Path(b)
    fa = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    fb = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    diff = sorted(set(map(str, fa)) ^ set(map(str, fb)))
    for rel in set(fa) & set(fb):
        if not filecmp.cmp(a / rel, b / rel, shallow=False):
            diff.append(str(rel))
    return sorted(diff)


def check_determinism(first, second) -> CheckResult:
    diff = compare_dirs(first, second)
    return CheckResult(14, "determinism", not diff, float(len(diff)), "byte-identical artifacts",
                       {"differing": diff})


def verify(out, only=None, workers: int = 1) -> list[CheckResult]:
    """Run the suite twice (run1/, run2/) and append the determinism check."""
    out = Path(out)
    results = run_checks(out / "run1", only, workers)
    run_checks(out / "run2", only, workers)
    results.append(check_determinism(out / "run1", out / "run2"))
    write_json(out / "summary.json", {"results": [r.to_dict() for r in results],
                                      "failed": [r.id for r in results if not r.passed]})
    return results
