"""Command-line entry point: ``frac-hessian <subcommand> [--config FILE] [--key value ...]``.

Settings come from a flat ``key = value`` file and/or flags with the same
names; flags win.  Unknown keys are rejected.  Every JSON output embeds the
package version, the seed and the resolved configuration.

Exit codes: 0 pass, 1 experiment failure, 2 bad input.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import constants as K
from . import experiments as X
from .errors import FracHessianError, SOutOfRange
from .fracop import QuadratureSpec, linear_fracop, linear_fracop_ycoords
from .infimum import InfOptions, F_ks
from .profiles import get_profile
from .serialize import write_csv, write_json


class UsageError(Exception):
    pass


# ------------------------------------------------------------ value parsers


def _bool(v: str) -> bool:
    t = str(v).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v: str) -> list:
    return [float(p) for p in str(v).replace(";", ",").split(",") if p.strip()]


def _opt_float(v: str):
    return None if str(v).strip().lower() in ("", "none") else float(v)


@dataclass(frozen=True)
class Key:
    name: str
    parse: Callable
    default: object
    help: str = ""


def _k(name, parse, default, help=""):
    return Key(name, parse, default, help)


COMMON = [_k("seed", int, 0, "RNG seed"), _k("threads", int, None, "worker cap (also FRAC_HESSIAN_THREADS)"),
          _k("out", str, None, "output JSON path")]
PROFILE = [_k("profile", str, "smoothed_cone", "smoothed_cone | gaussian_dimple | affine"),
           _k("a", float, 1.0, "cone smoothing radius"), _k("c", float, 0.05, "dimple depth"),
           _k("b", _floats, None, "affine slope vector"), _k("c0", float, 0.0, "affine offset")]
QUAD = [_k("n_radial", int, 48), _k("n_angular", int, 16), _k("r_min", float, 1e-4), _k("R_max", float, 1e4),
        _k("tail_policy", str, "error-bar"), _k("quad_tol", float, 1e-6), _k("radial_order", int, 8),
        _k("graded", _bool, False), _k("graded_panels", int, 24)]
INF = [_k("mode", str, "auto"), _k("n_starts", int, 8), _k("n_probe", int, 32), _k("maxfev", int, 600)]

SUBCOMMANDS: dict[str, list] = {
    "constants": [_k("n", int, 3), _k("s", float, 0.75), _k("L", float, 1.0), _k("SC", float, 1.0),
                  _k("eta0", float, 0.1)],
    "envelope-check": [_k("n", int, 3), _k("k", int, 2), _k("samples", int, 500), _k("tangent", int, 50),
                       _k("csv", str, None)],
    "eval": [_k("n", int, 3), _k("s", float, 0.75), _k("M", _floats, None, "row-major; default identity"),
             _k("x", _floats, None), _k("path", str, "z", "z | y")] + PROFILE + QUAD,
    "inf": [_k("n", int, 3), _k("k", int, 2), _k("s", float, 0.75), _k("x", _floats, None)] + PROFILE + QUAD + INF,
    "blowup": [_k("n", int, 3), _k("s", float, 0.75), _k("eps", _floats, [0.1, 0.03, 0.01, 0.003, 0.001]),
               _k("slope_tol", float, 0.05), _k("eta0", _opt_float, None), _k("csv", str, None)] + PROFILE + QUAD,
    "subspace": [_k("n", int, 3), _k("s", float, 0.75), _k("eta0", _opt_float, None, "default: measured"),
                 _k("frames", int, 32), _k("weighted", int, 8), _k("csv", str, None)] + PROFILE + QUAD + INF,
    "eigencheck": [_k("n", int, 3), _k("eps", _floats, [0.01, 0.05, 0.2]), _k("samples", int, 500),
                   _k("csv", str, None)],
    "ellipticity": [_k("n", int, 3), _k("s", float, 0.75), _k("x", _floats, None), _k("probe_samples", int, 16),
                    _k("rel_tol", float, 1e-3), _k("csv", str, None)] + PROFILE + QUAD + INF,
    "solve": [_k("n", int, 2), _k("k", int, 2), _k("s", float, 0.75), _k("R", float, 8.0), _k("m", int, 64),
              _k("omega", float, 0.5), _k("method", str, "howard", "howard | picard | plain"),
              _k("max_iters", int, 400), _k("residual_tol", float, 1e-4), _k("solver_angular", int, 16),
              _k("aniso_cap", _opt_float, None, "default 50 (n = 2) or 10 (n = 3)"), _k("allow_3d", _bool, False), _k("format", str, "csv", "csv | bin"),
              _k("grid_out", str, "solution", "grid file prefix")] + PROFILE,
}


def _keys(cmd: str) -> dict:
    return {k.name: k for k in SUBCOMMANDS[cmd] + COMMON}


def read_config(path) -> dict:
    """Flat ``key = value`` (or ``key: value``) lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, val = line.split(sep, 1)
                break
        else:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def resolve(cmd: str, file_values: dict, flag_values: dict) -> dict:
    keys = _keys(cmd)
    unknown = sorted(set(file_values) - set(keys))
    if unknown:
        raise UsageError(f"unknown config key(s) for {cmd}: {', '.join(unknown)}")
    cfg = {}
    for name, key in keys.items():
        raw = flag_values.get(name, file_values.get(name))
        if raw is None:
            cfg[name] = key.default
            continue
        try:
            cfg[name] = key.parse(raw)
        except ValueError as exc:
            raise UsageError(f"bad value for {name}: {exc}") from None
    if cfg["threads"] is None:
        env = os.environ.get("FRAC_HESSIAN_THREADS")
        cfg["threads"] = int(env) if env and env.isdigit() else 1
    if cfg["threads"] < 1:
        raise UsageError("threads must be >= 1")
    if cfg["out"] is None:
        cfg["out"] = f"{cmd}.json"
    return cfg


# ------------------------------------------------------------ builders


def _profile(cfg):
    name, n = cfg["profile"], cfg["n"]
    if name == "smoothed_cone":
        return get_profile(name, n, a=cfg["a"])
    if name == "gaussian_dimple":
        return get_profile(name, n, c=cfg["c"])
    if name == "affine":
        b = cfg["b"] if cfg["b"] is not None else [0.0] * n
        if len(b) != n:
            raise UsageError(f"b must have n = {n} entries")
        return get_profile(name, n, b=b, c0=cfg["c0"])
    return get_profile(name, n)  # raises ValueError naming the choices


def _quad(cfg) -> QuadratureSpec:
    return QuadratureSpec(n_radial=cfg["n_radial"], n_angular=cfg["n_angular"], r_min=cfg["r_min"],
                          R_max=cfg["R_max"], tail_policy=cfg["tail_policy"], tol=cfg["quad_tol"],
                          radial_order=cfg["radial_order"], graded=cfg["graded"],
                          graded_panels=cfg["graded_panels"], seed=cfg["seed"])


def _inf(cfg) -> InfOptions:
    return InfOptions(n_starts=cfg["n_starts"], seed=cfg["seed"], mode=cfg["mode"], n_probe=cfg["n_probe"],
                      maxfev=cfg["maxfev"], quad=_quad(cfg), workers=cfg["threads"])


def _point(cfg, key="x"):
    x = cfg[key] if cfg[key] is not None else [0.0] * cfg["n"]
    if len(x) != cfg["n"]:
        raise UsageError(f"{key} must have n = {cfg['n']} entries")
    return np.asarray(x, float)


def _envelope(cmd, cfg, status, result) -> dict:
    return {"version": __version__, "subcommand": cmd, "seed": cfg["seed"], "config": cfg,
            "status": status, "result": result}


def _report_exit(cmd, cfg, rep: X.ExperimentReport) -> int:
    write_json(cfg["out"], _envelope(cmd, cfg, rep.status, rep.to_record()))
    if cfg.get("csv"):
        write_csv(cfg["csv"], rep.samples)
    return 1 if rep.status == X.FAIL else 0


# ------------------------------------------------------------ subcommands


def run_constants(cfg) -> int:
    rep = K.ellipticity_threshold(cfg["n"], cfg["s"], cfg["L"], cfg["SC"], cfg["eta0"])
    write_json(cfg["out"], _envelope("constants", cfg, X.PASS, rep.to_record()))
    return 0


def run_envelope_check(cfg) -> int:
    if not 1 <= cfg["k"] <= cfg["n"]:
        raise UsageError("k must lie in 1..n")
    rng = np.random.default_rng(cfg["seed"])
    rep = X.envelope_check(cfg["n"], cfg["k"], cfg["samples"], rng, cfg["tangent"])
    return _report_exit("envelope-check", cfg, rep)


def run_eval(cfg) -> int:
    n = cfg["n"]
    u, q, x = _profile(cfg), _quad(cfg), _point(cfg)
    M = np.eye(n) if cfg["M"] is None else np.asarray(cfg["M"], float)
    if M.size != n * n:
        raise UsageError(f"M must have n^2 = {n * n} entries")
    M = M.reshape(n, n)
    if cfg["path"] not in ("y", "z"):
        raise UsageError("path must be y or z")
    op = linear_fracop if cfg["path"] == "z" else linear_fracop_ycoords
    r = op(u, M, x, cfg["s"], q)
    rec = {"profile": u.name, "M": M.ravel().tolist(), "x": x.tolist(), "s": cfg["s"], "value": r.value,
           "trunc_bound": r.trunc_bound, "stderr": r.stderr, "path": r.path, "spec": q.to_record()}
    write_json(cfg["out"], _envelope("eval", cfg, X.PASS, rec))
    return 0


def run_inf(cfg) -> int:
    if cfg["k"] not in range(1, cfg["n"] + 1):
        raise UsageError("k must lie in 1..n")
    r = F_ks(_profile(cfg), _point(cfg), cfg["k"], cfg["s"], _inf(cfg))
    write_json(cfg["out"], _envelope("inf", cfg, X.PASS, r.to_record()))
    return 0


def run_blowup(cfg) -> int:
    rep = X.blowup_experiment(_profile(cfg), cfg["n"], cfg["s"], cfg["eps"], _quad(cfg), cfg["slope_tol"], cfg["eta0"])
    return _report_exit("blowup", cfg, rep)


def run_subspace(cfg) -> int:
    u = _profile(cfg)
    eta0 = cfg["eta0"]
    if eta0 is None:
        eta0 = (1 - cfg["s"]) * F_ks(u, np.zeros(cfg["n"]), 2, cfg["s"], _inf(cfg)).value
    rng = np.random.default_rng(cfg["seed"])
    rep = X.subspace_bounds_check(u, cfg["n"], cfg["s"], eta0, cfg["frames"], rng, _quad(cfg), cfg["weighted"])
    return _report_exit("subspace", cfg, rep)


def run_eigencheck(cfg) -> int:
    rng = np.random.default_rng(cfg["seed"])
    reps = [X.eigenvalue_constraint_check(cfg["n"], e, cfg["samples"], rng) for e in cfg["eps"]]
    status = X.PASS if all(r.status == X.PASS for r in reps) else X.FAIL
    write_json(cfg["out"], _envelope("eigencheck", cfg, status, [r.to_record() for r in reps]))
    if cfg["csv"]:
        write_csv(cfg["csv"], [dict(row, eps=r.inputs["eps"]) for r in reps for row in r.samples])
    return 0 if status == X.PASS else 1


def run_ellipticity(cfg) -> int:
    opts = X.EllipticityOptions(inf=_inf(cfg), rel_tol=cfg["rel_tol"], probe_samples=cfg["probe_samples"],
                                seed=cfg["seed"])
    rep = X.ellipticity_check(_profile(cfg), _point(cfg), cfg["s"], opts)
    return _report_exit("ellipticity", cfg, rep)


def run_solve(cfg) -> int:
    from .solver import GridSpec, SolveOptions, modulus_report, solve_global

    if cfg["format"] not in ("csv", "bin"):
        raise UsageError("format must be csv or bin")
    opts = SolveOptions(omega=cfg["omega"], max_iters=cfg["max_iters"], residual_tol=cfg["residual_tol"],
                        n_angular=cfg["solver_angular"], aniso_cap=cfg["aniso_cap"], method=cfg["method"],
                        seed=cfg["seed"], allow_3d=cfg["allow_3d"])
    u = _profile(cfg)
    res = solve_global(u, cfg["k"], cfg["s"], GridSpec(cfg["n"], cfg["R"], cfg["m"]), opts)
    prefix = Path(cfg["grid_out"])
    files = [str(p) for p in res.u.save(prefix, cfg["format"])]
    hist_path = prefix.with_name(prefix.name + "_residuals.csv")
    write_csv(hist_path, [{"iteration": i + 1, "residual": r} for i, r in enumerate(res.residual_history)])
    files.append(str(hist_path))
    rec = res.to_record()
    rec["modulus"] = modulus_report(res.u)
    rec["phi_constants"] = {"L": u.L, "SC": u.SC}
    rec["files"] = files
    status = X.PASS if res.converged else X.FAIL
    write_json(cfg["out"], _envelope("solve", cfg, status, rec))
    return 0 if res.converged else 1


RUNNERS = {
    "constants": run_constants, "envelope-check": run_envelope_check, "eval": run_eval, "inf": run_inf,
    "blowup": run_blowup, "subspace": run_subspace, "eigencheck": run_eigencheck,
    "ellipticity": run_ellipticity, "solve": run_solve,
}


# ------------------------------------------------------------ entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="frac-hessian", description="Fractional k-Hessian operators and checks.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True)
    for cmd in SUBCOMMANDS:
        p = sub.add_parser(cmd)
        p.add_argument("--config", help="flat key = value file; flags override it")
        for key in _keys(cmd).values():
            flags = [f"--{key.name}"]
            if "_" in key.name:
                flags.append(f"--{key.name.replace('_', '-')}")
            p.add_argument(*flags, dest=key.name, default=None, help=key.help or None)
    return ap




def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("cmd", "config")}
    try:
        file_values = read_config(args.config) if args.config else {}
        cfg = resolve(args.cmd, file_values, flags)
        return RUNNERS[args.cmd](cfg)
    except (UsageError, SOutOfRange, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FracHessianError as exc:
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
