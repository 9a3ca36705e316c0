"""Experiment driver: ``elastica-np <spectrum|solve|converge|gap> --config cfg.json``.

Exit codes: 0 success, 2 invalid config, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .geometry import GeometryError, build_array, make_curve, single_inclusion
from .kernels import KernelError, LamePair
from .potentials import PotentialError
from .solvers import (
    LoadSpec,
    SolverError,
    density_snorm,
    error_snorm,
    load_norm,
    solve_limit_rigid,
    solve_limit_soft,
    solve_limit_stokes,
    solve_transmission,
)
from .spectra import GapRow, SpectralError, SpectralReport, gap_study, np_spectrum

__all__ = [
    "ConfigError",
    "ConvergenceRecord",
    "CONFIG_SCHEMA",
    "COLUMNS",
    "fit_rate",
    "export_csv",
    "read_csv",
    "load_config",
    "run_config",
    "main",
]

log = logging.getLogger("elastica_np")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

COLUMNS = {
    "spectrum": ["mode", "subspace", "eps", "index", "theta"],
    "gap": ["eps", "mN", "MN", "mD", "MD", "delta1"],
    "converge": ["case", "param", "error", "load_norm", "phi_norm", "seconds"],
    "solve": ["case", "kind", "param", "component", "node", "x", "y", "phi_x", "phi_y"],
}

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_PAIR2 = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}
_CURVE = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["circle", "ellipse", "kite", "trig"]},
        "center": _PAIR2,
        "radius": _POS,
        "semi_axes": {"type": "array", "items": _POS, "minItems": 2, "maxItems": 2},
        "size": _POS, "a": _NUM, "b": _POS, "c": _NUM,
        "cos": {"type": "array", "items": _NUM, "minItems": 1},
        "sin": {"type": "array", "items": _NUM},
    },
    "additionalProperties": False,
}
_EVEN = {"type": "integer", "minimum": 16, "multipleOf": 2}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["geometry", "material", "load"],
    "properties": {
        "run": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["spectrum", "solve", "converge", "gap"]},
                "seed": {"type": "integer"},
                "mode": {"enum": ["N", "D"]},
                "subspace": {"enum": ["full", "rigid_orthogonal"]},
                "N_cell": _EVEN,
            },
            "additionalProperties": False,
        },
        "geometry": {
            "type": "object",
            "required": ["outer", "omega", "N_incl", "N_outer"],
            "properties": {
                "outer": _CURVE,
                "omega": _CURVE,
                "eps": {"oneOf": [{"type": "null"}, _POS,
                                  {"type": "array", "items": _POS, "minItems": 1}]},
                "N_incl": _EVEN,
                "N_outer": _EVEN,
            },
            "additionalProperties": False,
        },
        "material": {
            "type": "object",
            "required": ["lambda", "mu"],
            "properties": {
                "lambda": _NUM,
                "mu": _POS,
                "contrast": {
                    "type": "object",
                    "required": ["case", "values"],
                    "properties": {
                        "case": {"enum": [1, 2, 3]},
                        "values": {"type": "array", "items": _POS, "minItems": 1},
                        "base": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "load": {
            "type": "object",
            "required": ["A"],
            "properties": {"A": {"type": "array", "minItems": 2, "maxItems": 2,
                                 "items": _PAIR2}},
            "additionalProperties": False,
        },
        "output": {"type": "object", "properties": {"dir": {"type": "string"}},
                   "additionalProperties": False},
    },
    "additionalProperties": False,
}


class ConfigError(ValueError):
    pass


@dataclass
class ConvergenceRecord:
    case: int
    param: float
    error: float
    load_norm: float
    phi_norm: float
    seconds: float
    eps: float | None = None
    N_incl: int | None = None
    N_outer: int | None = None


def _path(err):
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def load_config(path_or_dict) -> dict:
    """Parse and validate a config; raises ConfigError with a field path."""
    if isinstance(path_or_dict, dict):
        cfg = path_or_dict
    else:
        try:
            cfg = json.loads(Path(path_or_dict).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path_or_dict}: {exc}") from exc
    errors = sorted(jsonschema.Draft202012Validator(CONFIG_SCHEMA).iter_errors(cfg),
                    key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"config field {_path(e)}: {e.message}")
    mat = cfg["material"]
    if not LamePair(mat["lambda"], mat["mu"]).admissible:
        raise ConfigError("config field material: need mu > 0 and 2 lambda + 2 mu > 0")
    A = np.asarray(cfg["load"]["A"], float)
    if not np.allclose(A, A.T, rtol=0, atol=1e-14):
        raise ConfigError("config field load/A: strain matrix must be symmetric")
    return cfg


def fit_rate(records):
    """Least-squares slope and r^2 of log(error) against log(param)."""
    if len(records) < 3:
        raise ValueError(f"need at least 3 records to fit a rate, got {len(records)}")
    x = np.array([r.param for r in records], float)
    y = np.array([r.error for r in records], float)
    if np.any(y <= 0):
        raise ValueError("nothing to fit: zero errors (exact degeneracy)")
    lx, ly = np.log10(x), np.log10(y)
    if lx.max() - lx.min() < 2 - 1e-12:
        raise ValueError("records must span at least two decades of the parameter")
    slope, icpt = np.polyfit(lx, ly, 1)
    pred = slope * lx + icpt
    ss = ((ly - ly.mean()) ** 2).sum()
    r2 = 1.0 - ((ly - pred) ** 2).sum() / ss if ss > 0 else 1.0
    return float(slope), float(r2)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _rows(items, kind):
    if kind == "spectrum":
        for rep in items:
            eps = rep.meta.get("eps", "")
            for i, th in enumerate(np.sort(rep.eigenvalues)):
                yield [rep.mode, rep.subspace, eps, i, th]
    elif kind == "gap":
        for r in items:
            yield [r.eps, r.mN, r.MN, r.mD, r.MD, r.delta1]
    elif kind == "converge":
        for r in items:
            yield [r.case, r.param, r.error, r.load_norm, r.phi_norm, r.seconds]
    else:
        for r in items:
            yield list(r)


def _kind_of(items):
    first = items[0]
    if isinstance(first, SpectralReport):
        return "spectrum"
    if isinstance(first, GapRow):
        return "gap"
    if isinstance(first, ConvergenceRecord):
        return "converge"
    raise ValueError(f"cannot export items of type {type(first).__name__}")


def export_csv(items, path, kind=None):
    """Write reports, gap rows or convergence records as CSV (17 significant digits)."""
    items = list(items)
    kind = kind or (_kind_of(items) if items else "converge")
    if kind not in COLUMNS:
        raise ValueError(f"unknown CSV kind {kind!r}")
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS[kind])
            for row in _rows(items, kind):
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write CSV {path}: {exc}") from exc
    return path


def read_csv(path):
    """Header and rows of a CSV written by :func:`export_csv` (numbers as floats)."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))

    def conv(v):
        try:
            return float(v)
        except ValueError:
            return v

    return rows[0], [[conv(v) for v in r] for r in rows[1:]]


def _curve(d):
    d = dict(d)
    return make_curve(d.pop("kind"), d)


def _eps_list(geo):
    e = geo.get("eps")
    if e is None:
        return [None]
    return list(e) if isinstance(e, list) else [e]


def _array(geo, eps):
    outer, omega = _curve(geo["outer"]), _curve(geo["omega"])
    if eps is None:
        return single_inclusion(outer, omega, geo["N_incl"], geo["N_outer"])
    return build_array(outer, omega, eps, geo["N_incl"], geo["N_outer"])


def _tilde(case, value, base):
    lt0, mt0 = base
    if case == 1:
        return LamePair(value, mt0)
    if case == 2:
        return LamePair(value * lt0, value * mt0)
    pair = LamePair(lt0, value)
    scaled = LamePair(lt0 / value, 1.0)
    # the rescaled pair must stay uniformly admissible over the sweep
    if not scaled.uniformly_admissible(_CASE3_DELTA):
        raise SolverError(f"rescaled pair {scaled} is not uniformly admissible")
    return pair


_CASE3_DELTA = 0.1


def _limit(case, array, pair, load, base):
    if case == 1:
        return solve_limit_stokes(array, pair, base[1], load)
    if case == 2:
        return solve_limit_soft(array, pair, load)
    return solve_limit_rigid(array, pair, load)


def phi_bound_constant(array, pair):
    """Sweep-wide constant C with |phi| <= C |S^-1 G| in the energy norm.

    C = 1 + 1/theta_min, theta_min the bottom of 1/2 + K* in the energy form.
    """
    rep = np_spectrum(array.incl_mesh, pair, "N", "full", outer=array.outer_mesh)
    th = rep.m + 0.5
    if not th > 0:
        raise SpectralError(f"1/2 + K* is not positive (bottom {th:.3e})")
    return 1.0 + 1.0 / th


def _pair_load(cfg):
    m = cfg["material"]
    pair = LamePair(float(m["lambda"]), float(m["mu"]))
    return pair, LoadSpec(np.asarray(cfg["load"]["A"], float), pair)


def _contrast(cfg):
    c = cfg["material"].get("contrast")
    if c is None:
        raise ConfigError("config field material/contrast: required for this command")
    return int(c["case"]), sorted(float(v) for v in c["values"]), tuple(c.get("base", (1.0, 1.0)))


def run_converge(cfg, threads=1):
    pair, load = _pair_load(cfg)
    case, values, base = _contrast(cfg)
    geo = cfg["geometry"]
    eps = _eps_list(geo)[0]
    array = _array(geo, eps)
    lim = _limit(case, array, pair, load, base)
    gnorm = load_norm(array, pair, load)
    C = phi_bound_constant(array, pair)

    def point(v):
        t0 = time.perf_counter()
        b = solve_transmission(array, pair, _tilde(case, v, base), load)
        err = error_snorm(b, lim)
        pn = density_snorm(b.phi, b.mesh, b.spec)
        return ConvergenceRecord(case, v, err, gnorm, pn, time.perf_counter() - t0,
                                 eps, geo["N_incl"], geo["N_outer"])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            records = list(ex.map(point, values))
    else:
        records = [point(v) for v in values]
    for r in records:
        if r.phi_norm > C * r.load_norm:
            raise SolverError(f"density bound violated at param {r.param}: "
                              f"{r.phi_norm:.3e} > {C:.3f} x {r.load_norm:.3e}")
    extra = {"phi_bound_constant": C, "limit_phi_norm": density_snorm(lim.phi, lim.mesh, lim.spec)}
    if len(records) >= 3:
        try:
            extra["slope"], extra["r_squared"] = fit_rate(records)
        except ValueError as exc:
            extra["fit"] = str(exc)
    return records, extra


def run_spectrum(cfg):
    pair, _ = _pair_load(cfg)
    run = cfg.get("run", {})
    mode, sub = run.get("mode", "N"), run.get("subspace", "full")
    reports = []
    for eps in _eps_list(cfg["geometry"]):
        array = _array(cfg["geometry"], eps)
        rep = np_spectrum(array.incl_mesh, pair, mode, sub, outer=array.outer_mesh)
        rep.meta["eps"] = "" if eps is None else eps
        reports.append(rep)
    return reports, {"n_half": [r.n_half for r in reports],
                     "delta1": [r.delta1 for r in reports]}


def run_gap(cfg):
    pair, _ = _pair_load(cfg)
    geo = cfg["geometry"]
    eps = [e for e in _eps_list(geo) if e is not None]
    if not eps:
        raise ConfigError("config field geometry/eps: gap study needs at least one period")
    N_cell = cfg.get("run", {}).get("N_cell", 512)
    g = gap_study(_curve(geo["outer"]), _curve(geo["omega"]), pair, eps,
                  geo["N_incl"], geo["N_outer"], N_cell)
    return g.rows, {"mN_omega": g.mN_omega, "MD_omega": g.MD_omega,
                    "ordering_slack": g.ordering_slack(), "cell_slack": g.cell_slack(),
                    "delta1": g.delta1}


def run_solve(cfg):
    pair, load = _pair_load(cfg)
    case, values, base = _contrast(cfg)
    geo = cfg["geometry"]
    array = _array(geo, _eps_list(geo)[0])
    bundles = [("transmission", v, solve_transmission(array, pair, _tilde(case, v, base), load))
               for v in values]
    bundles.append(("limit", "", _limit(case, array, pair, load, base)))
    D = array.incl_mesh
    rows = []
    for kind, v, b in bundles:
        phi = b.phi.as_nodes()
        for c in range(D.n_components):
            s = D.component(c)
            for j, (x, f) in enumerate(zip(D.points[s], phi[s])):
                rows.append([case, kind if kind != "limit" else b.case, v, c, j,
                             x[0], x[1], f[0], f[1]])
    extra = {"phi_norm": {str(v) if v != "" else b.case: density_snorm(b.phi, b.mesh, b.spec)
                          for _, v, b in bundles}}
    return rows, extra


def run_config(config, kind=None, out=None, threads=None) -> dict:
    """Run one experiment; returns the manifest (also written next to the CSV)."""
    cfg = load_config(config)
    run = cfg.get("run", {})
    kind = kind or run.get("kind")
    if kind is None:
        raise ConfigError("config field run/kind: no command given")
    if run.get("kind") not in (None, kind):
        raise ConfigError(f"config field run/kind: {run['kind']!r} does not match command {kind!r}")
    threads = threads or int(os.environ.get("ELASTICA_NP_THREADS", "1") or 1)
    out_dir = Path(out or cfg.get("output", {}).get("dir", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    blas = 1 if (kind == "converge" and threads > 1) else threads
    with threadpool_limits(limits=blas):
        if kind == "converge":
            items, extra = run_converge(cfg, threads)
        elif kind == "spectrum":
            items, extra = run_spectrum(cfg)
        elif kind == "gap":
            items, extra = run_gap(cfg)
        else:
            items, extra = run_solve(cfg)
    csv_path = out_dir / f"{kind}.csv"
    export_csv(items, csv_path, kind)
    manifest = {
        "command": kind,
        "version": __version__,
        "config": cfg,
        "seed": run.get("seed"),
        "threads": threads,
        "seconds": time.perf_counter() - t0,
        "csv": csv_path.name,
        "results": _jsonable(extra),
    }
    (out_dir / f"{kind}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


_NUMERIC_ERRORS = (SolverError, SpectralError, KernelError, PotentialError, GeometryError,
                   np.linalg.LinAlgError, FloatingPointError)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="elastica-np", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=["spectrum", "solve", "converge", "gap"])
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--threads", type=int, help="worker threads (default $ELASTICA_NP_THREADS or 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        man = run_config(args.config, args.command, args.out, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    log.info("wrote %s in %.1fs", man["csv"], man["seconds"])
    return 0
