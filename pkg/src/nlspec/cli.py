"""Command-line entry point: ``nlspec <config.json> [--out-dir DIR] [--threads N]``.

Each config names one command. The command writes its result table to
``output.csv`` and a companion ``<stem>_checks.csv`` listing every checked
invariant as (check, value, bound, passed). Exit status is 0 when all checks
pass, 2 when any fails and 1 for usage or configuration errors (in which
case nothing is written).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import experiments as ex
from .domain import Box, domain_from_dict, field_from_dict, map_from_dict
from .errors import NlspecError
from .kernel import kernel_from_dict, make_kernel
from .operator import assemble, dump_operator, grid_from_dict, make_grid
from .plot import atomic_write, render_svg
from .shape import pullback_operator, shape_derivative, weighted_selfadjointness_check
from .spectral import eigendecompose

COMMANDS = ("spectrum", "converge", "perturb", "shape-derivative", "faber-krahn", "two-balls", "perforated")

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_OBJ = {"type": "object"}
_KERNEL = {"type": "object", "additionalProperties": False, "required": ["family", "width", "dim"],
           "properties": {"family": {"enum": ["bump", "gaussian", "tent"]}, "width": _POS,
                          "dim": {"enum": [1, 2]}}}
_GRID = {"type": "object", "additionalProperties": False, "required": ["h"],
         "properties": {"h": _POS, "margin": {"type": "integer", "minimum": 0},
                        "lo": {"type": "array", "items": _NUM},
                        "n_cells": {"oneOf": [{"type": "integer", "minimum": 1},
                                              {"type": "array", "items": {"type": "integer", "minimum": 1}}]}}}
_OUTPUT = {"type": "object", "additionalProperties": False, "required": ["csv"],
           "properties": {"csv": {"type": "string"}, "svg": {"type": "string"}, "dump": {"type": "string"},
                          "seed": {"type": "integer", "minimum": 0}}}
_EXPECT = {"type": "object", "additionalProperties": {
    "type": "object", "additionalProperties": False, "properties": {"min": _NUM, "max": _NUM}}}
_COMMON = {"command": {"enum": list(COMMANDS)}, "kernel": _KERNEL, "output": _OUTPUT, "expect": _EXPECT,
           "description": {"type": "string"}}

_SPECIFIC = {
    "spectrum": ({"domain": _OBJ, "grid": _GRID, "method": {"enum": ["lapack", "jacobi"]},
                  "trials": {"type": "integer", "minimum": 0}, "count": {"type": "integer", "minimum": 1},
                  "mass_check": {"type": "array", "items": _KERNEL}}, ["domain", "grid"]),
    "converge": ({"domain": _OBJ, "n_list": {"type": "array", "items": {"type": "integer", "minimum": 2},
                                             "minItems": 3},
                  "min_order": _NUM}, ["domain", "n_list"]),
    "perturb": ({"limit": _OBJ, "family": {"type": "array", "items": _OBJ, "minItems": 1},
                 "labels": {"type": "array", "items": {"type": "string"}}, "grid": _GRID,
                 "track": {"type": "integer", "minimum": 1}, "margin": {"type": "boolean"},
                 "contraction": _POS}, ["limit", "family", "grid"]),
    "shape-derivative": ({"domain": _OBJ, "grid": _GRID, "index": {"type": "integer", "minimum": 1},
                          "t": _POS, "m": {"type": "integer", "minimum": 8},
                          "rtol": _POS, "zero_atol": _POS,
                          "fields": {"type": "array", "minItems": 1, "items": {
                              "type": "object", "additionalProperties": False, "required": ["name"],
                              "properties": {"name": {"type": "string"}, "direction": {"type": "array"},
                                             "expect_zero": {"type": "boolean"}}}},
                          "pullback": {"type": "object", "additionalProperties": False,
                                       "required": ["base", "map", "image", "h"],
                                       "properties": {"base": _OBJ, "map": _OBJ, "image": _OBJ, "h": _POS,
                                                      "kernel": _KERNEL,
                                                      "count": {"type": "integer", "minimum": 1},
                                                      "rtol": _POS, "nonconstant_map": _OBJ}}},
                         ["domain", "grid", "fields"]),
    "faber-krahn": ({"candidates": {"type": "array", "items": _OBJ, "minItems": 1},
                     "labels": {"type": "array", "items": {"type": "string"}}, "h": _POS,
                     "include_ball": {"type": "boolean"}, "ordered": {"type": "boolean"},
                     "strict": {"type": "boolean"}, "min_rise": _NUM, "margin": {"type": "boolean"}},
                    ["candidates", "h"]),
    "two-balls": ({"radius": _POS, "separations": {"type": "array", "items": _POS, "minItems": 1}, "h": _POS},
                  ["radius", "separations", "h"]),
    "perforated": ({"base": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 2,
                                                        "maxItems": 2}},
                    "hole_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                    "hole": {"enum": ["box", "ball"]},
                    "eps_list": {"type": "array", "items": _POS, "minItems": 1}, "grid": _GRID,
                    "margin": {"type": "boolean"}}, ["base", "hole_fraction", "eps_list", "grid"]),
}


class ConfigError(Exception):
    pass


def schema_for(command: str) -> dict:
    props, required = _SPECIFIC[command]
    return {"type": "object", "additionalProperties": False,
            "required": ["command", "kernel", "output", *required],
            "properties": {**_COMMON, **props}}


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cli: cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict) or cfg.get("command") not in COMMANDS:
        raise ConfigError(f"cli: config needs a 'command' from {COMMANDS}")
    try:
        jsonschema.validate(cfg, schema_for(cfg["command"]))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"cli: config invalid at {where}: {exc.message}") from exc
    return cfg


def fmt(v) -> str:
    """17 significant digits for floats so repeated runs can be compared byte for byte."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(v)


def to_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


# --------------------------------------------------------------------------
# commands: each returns (header, rows, checks, plot series or None)

def _kernel(cfg):
    return kernel_from_dict(cfg["kernel"])


def run_spectrum(cfg, threads):
    k = _kernel(cfg)
    d = domain_from_dict(cfg["domain"])
    g = grid_from_dict(cfg["grid"], [d], d.dim)
    seed = cfg["output"].get("seed", 0)
    rep = ex.spectrum_report(k, d, g, cfg.get("method", "lapack"), cfg.get("trials", 100), seed)
    s = rep.solved.spectrum
    checks = dict(rep.checks)
    for desc in cfg.get("mass_check", []):
        kk = make_kernel(desc["family"], desc["width"], desc["dim"])
        checks[f"unit_mass[{kk.family},{kk.width:g},{kk.dim}]"] = (kk.mass_residual, 1e-8, kk.mass_residual < 1e-8)
    count = min(cfg.get("count", len(s)), len(s))
    rows = [[i + 1, s.mus[i], s.lambdas[i], s.gaps[i], bool(s.simple_flags[i])] for i in range(count)]
    series = [(i + 1, float(s.lambdas[i])) for i in range(min(count, 50))]
    extra = {"dump": rep.solved.op}
    return ["index", "mu", "lambda", "gap", "simple_flag"], rows, checks, (series, "index", "lambda"), extra


def run_converge(cfg, threads):
    k = _kernel(cfg)
    d = domain_from_dict(cfg["domain"])
    rep = ex.grid_convergence(k, d, cfg["n_list"], cfg.get("min_order", 1.0), threads)
    rows = []
    for i, n in enumerate(rep.n_list):
        diff = rep.differences[i - 1] if i > 0 else float("nan")
        order = rep.orders[i - 2] if i > 1 else float("nan")
        rows.append([n, rep.lambda1[i], diff, order])
    series = list(zip(rep.n_list, rep.lambda1))
    return ["n", "lambda1", "difference", "order"], rows, rep.checks, (series, "n", "lambda1"), {}


def run_perturb(cfg, threads):
    k = _kernel(cfg)
    limit = domain_from_dict(cfg["limit"])
    family = [domain_from_dict(f) for f in cfg["family"]]
    g = grid_from_dict(cfg["grid"], [limit, *family], limit.dim)
    track = cfg.get("track", 1)
    rep = ex.continuity_sweep(k, limit, family, g, cfg.get("labels"), track, threads, cfg.get("margin", True))
    checks = dict(rep.checks)
    checks.update(ex.continuity_trend_checks(rep, cfg.get("contraction", 0.5)))
    header = ["label", "symdiff", "symdiff_estimate", "norm_diff", "bound", "e_h", "lambda1", "dlambda1"]
    header += [f"mu{i + 1}" for i in range(track)] + [f"dist{i + 1}" for i in range(track)]
    rows = [[m["label"], m["symdiff"], m["symdiff_estimate"], m["norm_diff"], m["bound"], m["e_h"],
             m["lambdas"][0], m["dlambda1"], *m["mus"], *m["dist"]] for m in rep.members]
    series = [(i + 1, m["dlambda1"]) for i, m in enumerate(rep.members)]
    return header, rows, checks, (series, "member", "|dlambda1|"), {}


def run_shape(cfg, threads):
    k = _kernel(cfg)
    d = domain_from_dict(cfg["domain"])
    g = grid_from_dict(cfg["grid"], [d], d.dim)
    idx = cfg.get("index", 1)
    rtol = cfg.get("rtol", 0.02)
    atol = cfg.get("zero_atol", 1e-6)
    checks: dict = {}
    ex.merge_structure(checks, [ex.solve(k, d, g, "domain")])
    rows, series = [], []
    for i, fd in enumerate(cfg["fields"]):
        V = field_from_dict({key: fd[key] for key in ("name", "direction") if key in fd})
        r = shape_derivative(k, d, idx, V, g, cfg.get("t"), cfg.get("m", 256), threads=threads)
        rows.append([r.field_name, r.lambda0, r.boundary_integral, r.dlambda_formula, r.dlambda_fd, r.t,
                     r.rel_error, r.dmu_formula, r.dlambda_forward, r.dlambda_backward,
                     r.boundary_integral_half_m, r.abs_error, r.smooth_boundary])
        series.append((i + 1, r.dlambda_fd))
        name = r.field_name
        sym = abs(r.dlambda_formula + r.dmu_formula)
        checks[f"dlambda_equals_minus_dmu[{name}]"] = (sym, 1e-12, sym <= 1e-12)
        if fd.get("expect_zero", False):
            checks[f"formula_zero[{name}]"] = (abs(r.dlambda_formula), atol, abs(r.dlambda_formula) <= atol)
            checks[f"fd_zero[{name}]"] = (abs(r.dlambda_fd), atol, abs(r.dlambda_fd) <= atol)
        else:
            checks[f"formula_matches_fd[{name}]"] = (r.rel_error, rtol, r.rel_error <= rtol)
    if "pullback" in cfg:
        pb = cfg["pullback"]
        checks.update(_pullback_checks(kernel_from_dict(pb["kernel"]) if "kernel" in pb else k, pb))
    header = ["field_name", "lambda0", "boundary_integral", "dlambda_formula", "dlambda_fd", "t", "rel_error",
              "dmu_formula", "dlambda_forward", "dlambda_backward", "boundary_integral_half_m", "abs_error",
              "smooth_boundary"]
    return header, rows, checks, (series, "field", "dlambda (fd)"), {}


def _pullback_checks(k, pb) -> dict:
    base = domain_from_dict(pb["base"])
    image = domain_from_dict(pb["image"])
    m = map_from_dict(pb["map"])
    h = pb["h"]
    count = pb.get("count", 3)
    rtol = pb.get("rtol", 1e-3)
    out = {}
    P = pullback_operator(k, base, m, make_grid([base], h))
    pe = P.eigenvalues()[:count]
    de = eigendecompose(assemble(k, image, make_grid([image], h)), vectors=False).mus[:count]
    for i in range(count):
        rel = abs(pe[i] - de[i]) / abs(de[i])
        out[f"pullback_spectrum[{i + 1}]"] = (rel, rtol, rel <= rtol)
    res = weighted_selfadjointness_check(P.P, P.weights)
    out["weighted_selfadjoint"] = (res, 1e-12, res < 1e-12)
    if "nonconstant_map" in pb:
        m2 = map_from_dict(pb["nonconstant_map"])
        P2 = pullback_operator(k, base, m2, make_grid([base], h))
        res_w = weighted_selfadjointness_check(P2.P, P2.weights)
        out["weighted_selfadjoint[nonconstant]"] = (res_w, 1e-12, res_w < 1e-12)
        res_u = weighted_selfadjointness_check(P2.P, np.ones(len(P2.weights)))
        out["unweighted_asymmetry[nonconstant]"] = (res_u, 1e-6, res_u > 1e-6)
    return out


def run_faber_krahn(cfg, threads):
    k = _kernel(cfg)
    cands = [domain_from_dict(c) for c in cfg["candidates"]]
    rep = ex.faber_krahn_check(k, cands, cfg["h"], cfg.get("labels"), cfg.get("include_ball", True),
                               cfg.get("ordered", False), cfg.get("strict", False), cfg.get("min_rise"),
                               cfg.get("margin", True), threads)
    rows = [[r["label"], r["measure"], r["grid_measure"], r["nodes"], r["lambda1"], r["e_h"]] for r in rep.rows]
    series = [(i + 1, r["lambda1"]) for i, r in enumerate(rep.rows)]
    return (["label", "measure", "grid_measure", "nodes", "lambda1", "e_h"], rows, rep.checks,
            (series, "candidate", "lambda1"), {})


def run_two_balls(cfg, threads):
    k = _kernel(cfg)
    rep = ex.hong_krahn_szego_check(k, cfg["radius"], cfg["separations"], cfg["h"], threads)
    rows = [[r["separation"], r["separation_used"], r["lambda1"], r["lambda2"], rep.single_lambda1,
             rep.double_lambda2] for r in rep.rows]
    series = [(r["separation"], r["lambda2"]) for r in rep.rows]
    return (["separation", "separation_used", "lambda1", "lambda2", "lambda1_single", "lambda2_double"], rows,
            rep.checks, (series, "separation", "lambda2"), {})


def run_perforated(cfg, threads):
    k = _kernel(cfg)
    base = Box(tuple(float(a) for a, _ in cfg["base"]), tuple(float(b) for _, b in cfg["base"]))
    g = grid_from_dict(cfg["grid"], [base], base.dim)
    rep = ex.perforated_limit(k, base, cfg["hole_fraction"], cfg["eps_list"], g, cfg.get("hole", "box"),
                              cfg.get("margin", True), threads)
    rows = [["lambda1_eps", e, lam] for e, lam in zip(rep.eps_list, rep.lambda1_eps)]
    rows += [["lambda1_solid", "", rep.lambda1_solid], ["lambda1_zero_fraction", rep.eps_list[-1],
                                                         rep.zero_fraction_lambda1],
             ["chi", "", rep.chi], ["beta1_hat", "", rep.beta1_hat], ["e_h", "", rep.e_h]]
    for v in rep.variants:
        for key in ("index", "eigenvalue", "target", "beta_pred", "residual", "tol", "matches"):
            rows.append([f"variant_{v['variant']}_{key}", "", v[key]])
    series = list(zip(rep.eps_list, rep.lambda1_eps))
    return ["quantity", "eps", "value"], rows, rep.checks, (series, "eps", "lambda1"), {}


RUNNERS = {"spectrum": run_spectrum, "converge": run_converge, "perturb": run_perturb,
           "shape-derivative": run_shape, "faber-krahn": run_faber_krahn, "two-balls": run_two_balls,
           "perforated": run_perforated}


def apply_expectations(checks: dict, expect: dict) -> dict:
    """Tighten named checks with extra open bounds on their reported value."""
    out = dict(checks)
    for name, rng in expect.items():
        if name not in out:
            raise ConfigError(f"cli: expect names unknown check {name!r}")
        val, bound, ok = out[name]
        lo, hi = rng.get("min", -math.inf), rng.get("max", math.inf)
        out[name] = (val, bound, bool(ok and lo < val < hi))
    return out


def run(config_path, out_dir=None, threads: int = 1, stderr=sys.stderr) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(exc, file=stderr)
        return 1
    out_dir = Path(out_dir) if out_dir else Path.cwd()
    try:
        header, rows, checks, plot, extra = RUNNERS[cfg["command"]](cfg, threads)
        checks = apply_expectations(checks, cfg.get("expect", {}))
    except ConfigError as exc:
        print(exc, file=stderr)
        return 1
    except (NlspecError, ValueError, KeyError) as exc:
        print(f"{exc}", file=stderr)
        return 1
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / cfg["output"]["csv"]
    atomic_write(csv_path, to_csv(header, rows))
    check_rows = [[name, v, b, ok] for name, (v, b, ok) in checks.items()]
    atomic_write(csv_path.with_name(csv_path.stem + "_checks.csv"),
                 to_csv(["check", "value", "bound", "passed"], check_rows))
    if "svg" in cfg["output"]:
        series, xl, yl = plot
        atomic_write(out_dir / cfg["output"]["svg"], render_svg(series, cfg["command"], xl, yl))
    if "dump" in cfg["output"] and "dump" in extra:
        dump_operator(extra["dump"], out_dir / cfg["output"]["dump"])
    failed = [name for name, (_, _, ok) in checks.items() if not ok]
    if failed:
        for name in failed:
            v, b, _ = checks[name]
            print(f"{cfg['command']}: invariant {name} violated (value {fmt(v)}, bound {fmt(b)})", file=stderr)
        return 2
    return 0


def _threads(arg) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("NLSPEC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nlspec", description="Run one nonlocal-spectrum experiment config.")
    parser.add_argument("config", help="experiment config (JSON)")
    parser.add_argument("--out-dir", default=None, help="directory for CSV/SVG outputs (default: cwd)")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default: $NLSPEC_THREADS or 1)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    if args.threads is not None and args.threads < 1:
        print("cli: --threads must be at least 1", file=sys.stderr)
        return 1
    return run(args.config, args.out_dir, _threads(args.threads))


if __name__ == "__main__":
    sys.exit(main())
