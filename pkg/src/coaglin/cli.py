"""Command-line driver: ``coaglin <subcommand> [--key value | key=value ...]``.

Parameters come from defaults, then an optional ``--config`` file of
``key=value`` lines (``#`` starts a comment), then the command line. Unknown
keys are a usage error (exit 2) and nothing is written. Every run writes
``manifest.json`` with the resolved parameters next to its CSV files.

Exit codes: 0 success, 1 a check failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import write_csv, write_json
from .core import Field, FieldSeries, ModelParams, PeriodicGrid, build_grid, canonical_profile

MODEL_KEYS = {"lam": float, "sigma": float, "delta": float, "gamma": float, "A": float,
              "B": float, "T": float}
GRID_KEYS = {"Jmin": int, "Jmax": int, "P": int}

SUBCOMMANDS = {
    "symbol": {"eps": 1.0, "R": 1.0, "xi_max": 10.0, "n": 100, "method": "quadrature"},
    "operators": {"eps": 0.25, "R": 8.0},
    "evolve": {"theta": 0.0, "eps": 0.0, "dt": 0.0, "scheme": "imex", "mu_c": 1.0,
               "save": ""},
    "fundsol": {"x0": 1.0, "w": 0.02, "t": 0.5, "convergence": 0},
    "norms": {"input": "", "q": 1.5, "p": 0.0},
    "continuation": {"thetas": "0,0.25,0.5,0.75,1", "mu_c": 1.0},
    "verify": {"only": ""},
}

GRID_DEFAULTS = {
    "symbol": (-8, 8, 16), "operators": (-8, 8, 16), "evolve": (-8, 8, 16),
    "fundsol": (-10, 10, 24), "norms": (-8, 8, 16), "continuation": (-8, 8, 16),
    "verify": (-8, 8, 16),
}


class UsageError(Exception):
    pass


def parse_config_text(text: str) -> dict:
    """Flat ``key=value`` pairs; blank lines and ``#`` comments ignored."""
    out = {}
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {i}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _convert(typ, key: str, value):
    if typ is str:
        return str(value)
    try:
        return typ(float(value)) if typ is int else typ(value)
    except (TypeError, ValueError):
        raise UsageError(f"bad value for {key}: {value!r}") from None


def resolve(sub: str, overrides: dict) -> dict:
    """Defaults merged with overrides, all keys validated and typed."""
    if sub not in SUBCOMMANDS:
        raise UsageError(f"unknown subcommand {sub!r}")
    jmin, jmax, P = GRID_DEFAULTS[sub]
    model = ModelParams().to_dict()
    cfg = {**{k: model[k] for k in MODEL_KEYS}, "Jmin": jmin, "Jmax": jmax, "P": P,
           **SUBCOMMANDS[sub]}
    types = {**MODEL_KEYS, **GRID_KEYS, **{k: type(v) for k, v in SUBCOMMANDS[sub].items()}}
    for k, v in overrides.items():
        if k not in types:
            raise UsageError(f"unknown key {k!r} for {sub}")
        cfg[k] = _convert(types[k], k, v)
    try:
        ModelParams(**{k: cfg[k] for k in MODEL_KEYS})
        build_grid(cfg["Jmin"], cfg["Jmax"], cfg["P"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _split_overrides(tokens: list[str]) -> dict:
    out, i = {}, 0
    while i < len(tokens):
        tok = tokens[i]
        if tok.startswith("--"):
            key = tok[2:]
            if "=" in key:
                key, val = key.split("=", 1)
            elif i + 1 < len(tokens):
                i += 1
                val = tokens[i]
            else:
                raise UsageError(f"missing value for {tok}")
            out[key.replace("-", "_")] = val
        elif "=" in tok:
            k, v = tok.split("=", 1)
            out[k] = v
        else:
            raise UsageError(f"cannot parse argument {tok!r}")
        i += 1
    return out


def _params(cfg: dict) -> ModelParams:
    return ModelParams(**{k: cfg[k] for k in MODEL_KEYS})


def _grid(cfg: dict):
    return build_grid(cfg["Jmin"], cfg["Jmax"], cfg["P"])


def _floats(text: str) -> list[float]:
    return [float(s) for s in text.split(",") if s.strip()]


def _mu(cfg: dict, params: ModelParams):
    from .acceptance import mu_family

    return mu_family(cfg["mu_c"], params.delta)


# ---------------------------------------------------------------------------
# subcommands; each returns (ok, extra manifest entries)


def cmd_symbol(cfg, out: Path, workers: int):
    from .symbols import build_symbol_grid, check_symbol_inequalities

    prof = canonical_profile(_params(cfg))
    sg = build_symbol_grid(cfg["xi_max"], cfg["n"], cfg["eps"], cfg["R"], prof, cfg["method"])
    write_csv(out / "symbol.csv", ["xi", "re", "im"], sg.to_csv_rows())
    chk = sg.check()
    ineq = check_symbol_inequalities(sg)
    write_json(out / "checks.json", {"invariants": chk, "inequalities": ineq})
    ok = chk["re_violations"] == 0 and chk["hermitian_err"] == 0.0 and chk["W0"] == 0.0
    return ok, {"checks": chk}


def cmd_operators(cfg, out: Path, workers: int):
    from .symbols import symbol_W, wtilde_table
    from .operators import apply_T, operator_matrix, symmetrization_defect
    from .core import bump_profile

    params = _params(cfg)
    prof = canonical_profile(params)
    eps, R = cfg["eps"], cfg["R"]
    mesh = PeriodicGrid(-32.0, 64.0, 2**14)
    f = Field.from_function(mesh, lambda x: np.exp(-x * x))
    direct = apply_T(f, prof, eps, R).values
    mult = np.fft.ifft(symbol_W(mesh.k, eps, R, prof, wt=wtilde_table(prof)) * np.fft.fft(f.values)).real
    mult_err = float(np.linalg.norm(direct - mult) / np.linalg.norm(mult))

    grid = _grid(cfg)
    g = np.exp(-4 * np.log(grid.nodes) ** 2)
    d = (operator_matrix("L_eps", grid, prof, eps=eps) - operator_matrix("L", grid, prof)) @ g
    leps = float(np.sqrt(grid.integrate(d * d)) / np.sqrt(grid.integrate(
        (operator_matrix("L", grid, prof) @ g) ** 2)))

    bgrid = build_grid(-4, 4, 32)
    bump = lambda x: np.where((x > 0.5) & (x < 1.5),
                              (4 * np.clip((x - 0.5) * (1.5 - x), 0, None)) ** 4, 0.0)
    v, scale = symmetrization_defect(Field.from_function(bgrid, bump), bump_profile(params))
    sym = abs(v) / scale
    rows = [("multiplier_rel_l2", mult_err, 1e-3), ("symmetrization_rel", sym, 1e-8),
            ("L_eps_minus_L_rel_l2", leps, float("inf"))]
    write_csv(out / "operators.csv", ["check", "value", "tolerance"], rows)
    return mult_err <= 1e-3 and sym <= 1e-8, {}


def cmd_evolve(cfg, out: Path, workers: int):
    from .norms import norm_report
    from .solver import SolveConfig, SolverBlowUp, evolve

    params = _params(cfg)
    prof = canonical_profile(params)
    grid = _grid(cfg)
    try:
        sc = SolveConfig(prof, grid, theta=cfg["theta"], eps=cfg["eps"], T=params.T,
                         dt=cfg["dt"] or None, scheme=cfg["scheme"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    # empty save list keeps every step so the stored series supports norms
    save = [t for t in _floats(cfg["save"]) if 0 < t <= params.T]
    try:
        res = evolve(sc, _mu(cfg, params), save_times=save or None)
    except SolverBlowUp as exc:
        write_json(out / "blowup.json", exc.diagnostics)
        return False, {"blowup": str(exc)}
    s = res.series
    write_csv(out / "series.csv", ["t", "x", "h"],
              [(t, x, v) for t, row in zip(s.times, s.values) for x, v in zip(grid.nodes, row)])
    rep = norm_report(s, params, 1.5, params.p_out)
    return True, {"solve": res.to_dict(), "norms": rep.to_dict()}


def cmd_fundsol(cfg, out: Path, workers: int):
    from .fundsol import check_tail_bounds, compute_fundamental

    params = _params(cfg)
    prof = canonical_profile(params)
    grid = _grid(cfg)
    try:
        r = compute_fundamental(cfg["x0"], cfg["w"], [cfg["t"]], grid, prof,
                                convergence=bool(cfg["convergence"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    write_csv(out / "fundsol.csv", ["t", "x", "g"], r.long_rows())
    try:
        r.fits = check_tail_bounds(r, cfg["t"], params.lam)
    except ValueError as exc:
        r.fits = {"error": str(exc)}
    write_json(out / "fits.json", r.fits)
    if r.under_resolved:
        print("coaglin: warning: initial Gaussian has fewer than 8 nodes within 2w", file=sys.stderr)
    return "error" not in r.fits, {"fundsol": r.to_dict() | {"fits": None}}


def read_series(path: Path):
    """Load ``series.csv`` and ``manifest.json`` written by ``evolve``."""
    path = Path(path)
    man = json.loads((path / "manifest.json").read_text())
    gd = man["config"]
    grid = build_grid(gd["Jmin"], gd["Jmax"], gd["P"])
    if grid.checksum() != man["grid"]["checksum"]:
        raise UsageError("grid checksum mismatch")
    with (path / "series.csv").open() as fh:
        rows = list(csv.reader(fh))[1:]
    data = np.array(rows, dtype=float)
    times = np.unique(data[:, 0])
    vals = data[:, 2].reshape(len(times), grid.N)
    return FieldSeries(grid, times, vals), man


def cmd_norms(cfg, out: Path, workers: int):
    from .norms import norm_report

    if not cfg["input"]:
        raise UsageError("norms needs input=<evolve output directory>")
    try:
        fs, _ = read_series(Path(cfg["input"]))
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot read series: {exc}") from None
    # the stored series fixes the grid
    cfg.update(Jmin=fs.grid.Jmin, Jmax=fs.grid.Jmax, P=fs.grid.P)
    params = _params(cfg)
    p = cfg["p"] or params.p_out
    rep = norm_report(fs, params, cfg["q"], p, T=min(params.T, float(fs.times[-1])),
                      with_bracket=True)
    write_csv(out / "blocks.csv", ["R", "t0", "N_inf", "N_2sigma", "M_inf", "M_2sigma"],
              rep.block_rows())
    return True, {"norms": rep.to_dict()}


def _continuation_one(args):
    cfg, theta = args
    from .solver import SolveConfig, continuation_sweep

    params = _params(cfg)
    base = SolveConfig(canonical_profile(params), _grid(cfg), T=params.T)
    return continuation_sweep([theta], _mu(cfg, params), base).rows[0]


def cmd_continuation(cfg, out: Path, workers: int):
    thetas = _floats(cfg["thetas"])
    if not thetas or any(b <= a for a, b in zip(thetas, thetas[1:])) or thetas[0] < 0 or thetas[-1] > 1:
        raise UsageError("thetas must be increasing inside [0, 1]")
    jobs = [(cfg, th) for th in thetas]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_continuation_one, jobs))
    else:
        rows = [_continuation_one(j) for j in jobs]
    ratios = [r["ratio"] for r in rows if r["ratio"] > 0]
    spread = max(ratios) / min(ratios) if ratios else 1.0
    write_csv(out / "continuation.csv", ["theta", "h_norm", "mu_norm", "ratio", "dt"],
              [(r["theta"], r["h_norm"], r["mu_norm"], r["ratio"], r["dt"]) for r in rows])
    return spread <= 3.0, {"spread": spread}


def cmd_verify(cfg, out: Path, workers: int):
    from .acceptance import verify

    only = {int(s) for s in cfg["only"].split(",") if s.strip()} or None
    results = verify(out, only, workers=workers)
    for r in results:
        print(r.line())
    failed = [r.id for r in results if not r.passed]
    write_json(out / "failures.json", {"failed": failed})
    return not failed, {"passed": [r.id for r in results if r.passed], "failed": failed}


COMMANDS = {"symbol": cmd_symbol, "operators": cmd_operators, "evolve": cmd_evolve,
            "fundsol": cmd_fundsol, "norms": cmd_norms, "continuation": cmd_continuation,
            "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coaglin", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("subcommand", choices=sorted(COMMANDS))
    ap.add_argument("--out", default=None, help="output directory (default out/<subcommand>)")
    ap.add_argument("--config", default=None, help="file with key=value lines")
    ap.add_argument("--workers", type=int, default=1, help="process count (default 1)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        ns, rest = ap.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    sub = ns.subcommand
    try:
        if ns.workers < 1:
            raise UsageError("--workers must be >= 1")
        overrides = {}
        if ns.config:
            try:
                overrides.update(parse_config_text(Path(ns.config).read_text()))
            except OSError as exc:
                raise UsageError(f"cannot read config: {exc}") from None
        overrides.update(_split_overrides(rest))
        cfg = resolve(sub, overrides)
        out = Path(ns.out or Path("out") / sub)
        fresh = not out.exists()
        out.mkdir(parents=True, exist_ok=True)
        try:
            ok, extra = COMMANDS[sub](cfg, out, ns.workers)
        except UsageError:
            # late validation failure: leave no artifacts behind
            if fresh:
                shutil.rmtree(out, ignore_errors=True)
            raise
    except UsageError as exc:
        print(f"coaglin: error: {exc}", file=sys.stderr)
        return 2
    grid = _grid(cfg)
    write_json(out / "manifest.json", {"subcommand": sub, "version": __version__,
                                       "config": cfg, "grid": grid.to_dict(),
                                       "status": "pass" if ok else "fail", **extra})
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
