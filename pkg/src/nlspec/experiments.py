"""End-to-end numerical experiments built from the operator, spectral and shape layers.

Each experiment returns a report whose ``checks`` map an invariant name to
``(value, bound, passed)``. Inequalities between continuum quantities carry
the slack factor (1 + 5 E_h), where E_h is the relative change of lambda_1
when the grid spacing is halved.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .domain import Ball, Box, Mapped, AffineDiagonal, Perforated, UnionOfBalls, ball_of_same_measure, \
    measure, symmetric_difference_measure, symmetric_difference_report
from .errors import NlspecError
from .kernel import KernelSpec
from .operator import ContainerGrid, assemble, lambda1_matrix_free, lipschitz_bound, make_grid, \
    operator_norm_diff
from .spectral import eigendecompose, power_iteration, rayleigh_lambda1, structure_checks

SLACK = 5.0


def _pmap(fn, items, threads: int = 1):
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


@dataclass
class Solved:
    """A domain with its operator, spectrum and structural checks."""

    label: str
    domain: object
    op: object
    spectrum: object
    checks: dict

    @property
    def lambda1(self) -> float:
        return self.spectrum.lambda1


def solve(k: KernelSpec, d, g: ContainerGrid, label: str = "", method: str = "lapack") -> Solved:
    op = assemble(k, d, g)
    s = eigendecompose(op, method=method)
    return Solved(label, d, op, s, structure_checks(op, s))


def discretization_error(k: KernelSpec, d, g: ContainerGrid) -> float:
    """E_h = |lambda_1(h/2) - lambda_1(h)| / lambda_1(h), both by matrix-free power iteration."""
    coarse = lambda1_matrix_free(k, d, g)
    fine = lambda1_matrix_free(k, d, g.refined(2))
    return abs(fine - coarse) / coarse


def merge_structure(checks: dict, solved: list[Solved]) -> None:
    """Copy per-domain structural checks into ``checks``, tagged with the domain label."""
    for sv in solved:
        for name, (val, bound, ok) in sv.checks.items():
            key = f"{name}[{sv.label}]"
            checks[key] = (val, bound, ok)


# --------------------------------------------------------------------------
# spectrum of a single domain

@dataclass
class SpectrumReport:
    solved: Solved
    power_mu1: float
    rayleigh_min: float
    rayleigh_at_u1: float
    checks: dict = field(default_factory=dict)


def spectrum_report(k: KernelSpec, d, g: ContainerGrid, method: str = "lapack",
                    trials: int = 100, seed: int = 0) -> SpectrumReport:
    sv = solve(k, d, g, "domain", method)
    s, op = sv.spectrum, sv.op
    checks = dict(sv.checks)
    mu_pow, _ = power_iteration(op.K)
    dev = abs(mu_pow - s.mu1) / s.mu1
    checks["power_iteration_mu1"] = (dev, 1e-10, dev < 1e-10)
    rng = np.random.default_rng(seed)
    vals = [rayleigh_lambda1(op, rng.standard_normal(op.n)) for _ in range(trials)]
    rmin = float(min(vals)) if vals else math.inf
    checks["rayleigh_lower_bound"] = (rmin - s.lambda1, -1e-10, rmin >= s.lambda1 - 1e-10)
    at1 = rayleigh_lambda1(op, s.vectors[:, 0])
    eq = abs(at1 - s.lambda1)
    checks["rayleigh_equality_at_u1"] = (eq, 1e-10, eq < 1e-10)
    return SpectrumReport(sv, mu_pow, rmin, at1, checks)


# --------------------------------------------------------------------------
# continuity under domain perturbation

@dataclass
class PerturbReport:
    limit: Solved
    members: list[dict]
    checks: dict = field(default_factory=dict)


def continuity_sweep(k: KernelSpec, limit, family: list, g: ContainerGrid, labels: list[str] | None = None,
                     track: int = 1, threads: int = 1, with_margin: bool = True) -> PerturbReport:
    """Compare every member of ``family`` against ``limit`` on one container grid."""
    labels = labels or [f"member{i}" for i in range(len(family))]
    for d in [limit, *family]:
        g.check_contains(d)
    base = solve(k, limit, g, "limit")
    e_lim = discretization_error(k, limit, g) if with_margin else 0.0

    def one(item):
        label, d = item
        sv = solve(k, d, g, label)
        sd = symmetric_difference_measure(limit, d)
        report = symmetric_difference_report(limit, d) if sd > 0 else None
        nd = operator_norm_diff(base.op, sv.op)
        bound = lipschitz_bound(k, limit, d, sd)
        e_h = max(e_lim, discretization_error(k, d, g)) if with_margin else 0.0
        dist = [abs(float(sv.spectrum.mus[i] - base.spectrum.mus[i])) for i in range(track)]
        simple = [bool(sv.spectrum.simple_flags[i] and base.spectrum.simple_flags[i]) for i in range(track)]
        return sv, {
            "label": label, "symdiff": sd,
            "symdiff_estimate": report["estimate"] if report else 0.0,
            "symdiff_flagged": bool(report and report["flagged"]),
            "norm_diff": nd, "bound": bound, "e_h": e_h,
            "mus": [float(m) for m in sv.spectrum.mus[:track]],
            "lambdas": [float(x) for x in sv.spectrum.lambdas[:track]],
            "dist": dist, "simple": simple,
            "dlambda1": abs(sv.lambda1 - base.lambda1),
        }

    results = _pmap(one, zip(labels, family), threads)
    members = [m for _, m in results]
    checks: dict = {}
    merge_structure(checks, [base] + [sv for sv, _ in results])
    for m in members:
        lab = m["label"]
        lim = m["bound"] * (1.0 + SLACK * m["e_h"])
        checks[f"lipschitz_bound[{lab}]"] = (m["norm_diff"], lim, m["norm_diff"] <= lim)
        worst = max(m["dist"])
        checks[f"weyl[{lab}]"] = (worst, m["norm_diff"], worst <= m["norm_diff"] + 1e-14)
        checks[f"tracked_simple[{lab}]"] = (float(all(m["simple"])), 1.0, all(m["simple"]))
    return PerturbReport(base, members, checks)


def continuity_trend_checks(report: PerturbReport, ratio: float = 0.5) -> dict:
    """|lambda_1(member) - lambda_1(limit)| nonincreasing along the family and shrinking by ``ratio``."""
    d = [m["dlambda1"] for m in report.members]
    steps = [b - a for a, b in zip(d, d[1:])]
    worst = max(steps, default=0.0)
    out = {"dlambda1_nonincreasing": (worst, 0.0, worst <= 0.0)}
    if d:
        out["dlambda1_contracts"] = (d[-1] / d[0] if d[0] else 0.0, ratio, d[-1] < ratio * d[0])
    return out


# --------------------------------------------------------------------------
# isoperimetric comparisons

@dataclass
class FaberKrahnReport:
    rows: list[dict]
    checks: dict = field(default_factory=dict)


def faber_krahn_check(k: KernelSpec, candidates: list, h: float, labels: list[str] | None = None,
                      include_ball: bool = True, ordered: bool = False, strict: bool = False,
                      min_rise: float | None = None, with_margin: bool = True,
                      threads: int = 1) -> FaberKrahnReport:
    """lambda_1 of equal-measure candidates against the ball of the same measure.

    With ``ordered`` the candidates (ball first when included) must have
    nondecreasing lambda_1 within the slack; ``strict`` drops the slack and
    demands strict increase; ``min_rise`` bounds last minus first from below.
    """
    labels = labels or [f"candidate{i}" for i in range(len(candidates))]
    ms = [measure(d) for d in candidates]
    spread = (max(ms) - min(ms)) / max(ms)
    if spread > 1e-3:
        raise NlspecError("experiments", f"equal_measure: candidate measures differ by {spread:.2e} relative")
    if include_ball:
        candidates = [ball_of_same_measure(candidates[0]), *candidates]
        labels = ["ball", *labels]

    def one(item):
        label, d = item
        sv = solve(k, d, make_grid([d], h), label)
        e_h = discretization_error(k, d, sv.op.grid) if with_margin else 0.0
        return sv, {"label": label, "measure": measure(d), "grid_measure": sv.op.grid_measure,
                    "nodes": sv.op.n, "lambda1": sv.lambda1, "e_h": e_h}

    results = _pmap(one, zip(labels, candidates), threads)
    rows = [r for _, r in results]
    checks: dict = {}
    merge_structure(checks, [sv for sv, _ in results])
    if include_ball:
        b = rows[0]
        for r in rows[1:]:
            e = max(b["e_h"], r["e_h"])
            lim = r["lambda1"] * (1.0 + SLACK * e)
            checks[f"ball_minimizes[{r['label']}]"] = (b["lambda1"], lim, b["lambda1"] <= lim)
    if ordered:
        for a, c in zip(rows, rows[1:]):
            name = f"ordered[{a['label']}<={c['label']}]"
            if strict:
                checks[name] = (a["lambda1"], c["lambda1"], a["lambda1"] < c["lambda1"])
            else:
                lim = c["lambda1"] * (1.0 + SLACK * max(a["e_h"], c["e_h"]))
                checks[name] = (a["lambda1"], lim, a["lambda1"] <= lim)
    if min_rise is not None:
        rise = rows[-1]["lambda1"] - rows[0]["lambda1"]
        checks["min_rise"] = (rise, min_rise, rise > min_rise)
    return FaberKrahnReport(rows, checks)


def stretched_rectangle(a: float) -> Mapped:
    """Image of the unit square under (x1, x2) -> (a x1, x2 / a)."""
    return Mapped(Box((0.0, 0.0), (1.0, 1.0)), AffineDiagonal((a, 1.0 / a)))


@dataclass
class TwoBallReport:
    single_lambda1: float
    double_lambda2: float
    rows: list[dict]
    checks: dict = field(default_factory=dict)


def hong_krahn_szego_check(k: KernelSpec, radius: float, separations: list[float], h: float,
                           threads: int = 1) -> TwoBallReport:
    """lambda_2 of two identical balls at increasing boundary-to-boundary separations.

    The second centre sits at a whole number of grid steps from the first, so
    both balls pick up translated copies of the same node set.
    """
    if min(separations) <= 0:
        raise NlspecError("experiments", "balls_disjoint: separations must be positive")
    single_d = Ball((0.0, 0.0), radius)
    single = solve(k, single_d, make_grid([single_d], h), "single")
    double_d = Ball((0.0, 0.0), radius * math.sqrt(2.0))
    double = solve(k, double_d, make_grid([double_d], h), "double")

    def one(sep):
        dist = math.ceil((2.0 * radius + sep) / h - 1e-9) * h
        d = UnionOfBalls((Ball((0.0, 0.0), radius), Ball((dist, 0.0), radius)))
        sv = solve(k, d, make_grid([d], h), f"sep={sep:g}")
        return sv, {"separation": sep, "separation_used": dist - 2.0 * radius,
                    "lambda1": sv.lambda1, "lambda2": float(sv.spectrum.lambdas[1])}

    results = _pmap(one, separations, threads)
    rows = [r for _, r in results]
    checks: dict = {}
    merge_structure(checks, [single, double] + [sv for sv, _ in results])
    for r in rows:
        if r["separation"] > k.support_radius:
            dev = abs(r["lambda2"] - single.lambda1)
            checks[f"decoupled[{r['separation']:g}]"] = (dev, 1e-9, dev < 1e-9)
        lam2_double = float(double.spectrum.lambdas[1])
        checks[f"two_balls_beat_double[{r['separation']:g}]"] = (r["lambda2"], lam2_double,
                                                                 r["lambda2"] <= lam2_double)
    steps = [b["lambda2"] - a["lambda2"] for a, b in zip(rows, rows[1:])]
    worst = max(steps, default=0.0)
    checks["lambda2_nonincreasing"] = (worst, 1e-9, worst <= 1e-9)
    return TwoBallReport(single.lambda1, float(double.spectrum.lambdas[1]), rows, checks)


# --------------------------------------------------------------------------
# periodically perforated domains

@dataclass
class PerforatedReport:
    chi: float
    eps_list: list[float]
    lambda1_eps: list[float]
    lambda1_solid: float
    beta1_hat: float
    e_h: float
    zero_fraction_lambda1: float
    variants: list[dict]
    checks: dict = field(default_factory=dict)


def _aligned(x: float, h: float) -> bool:
    r = x / h
    return abs(r - round(r)) < 1e-9


def check_alignment(eps: float, hole_fraction: float, g: ContainerGrid, hole: str = "box") -> None:
    ok = _aligned(eps, g.h)
    if hole == "box" and hole_fraction > 0:
        side = hole_fraction ** (1.0 / g.dim)
        ok = ok and _aligned(0.5 * eps * (1.0 - side), g.h)
    ok = ok and all(_aligned(v, g.h) for v in g.lo)
    if not ok:
        raise NlspecError("experiments", f"grid_alignment: eps={eps} holes do not fall on grid lines of h={g.h}")


def perforated_limit(k: KernelSpec, base: Box, hole_fraction: float, eps_list: list[float], g: ContainerGrid,
                     hole: str = "box", with_margin: bool = True, threads: int = 1) -> PerforatedReport:
    """lambda_1 along a shrinking period, its Richardson limit, and the candidate limit problems."""
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise NlspecError("experiments", "eps_decreasing: eps_list must be strictly decreasing")
    for e in eps_list:
        check_alignment(e, hole_fraction, g, hole)
    solid = solve(k, base, g, "solid")
    doms = [Perforated(e, hole_fraction, base, hole) for e in eps_list]
    zero = Perforated(eps_list[-1], 0.0, base, hole)
    solved = _pmap(lambda item: solve(k, item[1], g, item[0]),
                   [(f"eps={e:g}", d) for e, d in zip(eps_list, doms)] + [("hole_fraction=0", zero)], threads)
    zero_sv = solved.pop()
    lams = [sv.lambda1 for sv in solved]
    chi = doms[0].chi

    if len(eps_list) >= 2:
        r = eps_list[-2] / eps_list[-1]
        beta = (r * lams[-1] - lams[-2]) / (r - 1.0)
        spread = abs(lams[-1] - lams[-2])
    else:
        beta, spread = lams[-1], 0.0
    e_h = 0.0
    if with_margin:
        e_h = max(discretization_error(k, base, g), discretization_error(k, doms[-1], g))

    variants = []
    if hole_fraction > 0:
        c = (1.0 - chi) / chi
        B_eigs = solid.spectrum.lambdas
        tol = 2.0 * spread + SLACK * e_h * beta
        # (B + c) phi = (beta / chi) phi  and  (B - c) phi = -(beta / chi) phi
        for name, nu, to_beta in (("plus", B_eigs + c, lambda v: chi * v),
                                  ("minus", B_eigs - c, lambda v: -chi * v)):
            preds = to_beta(nu)
            j = int(np.argmin(np.abs(preds - beta)))
            vec = solid.spectrum.vectors[:, j]
            positive = bool(np.all(vec > 0) or np.all(vec < 0))
            res = abs(float(preds[j]) - beta)
            variants.append({"variant": name, "index": j + 1, "eigenvalue": float(nu[j]),
                             "target": beta / chi if name == "plus" else -beta / chi,
                             "beta_pred": float(preds[j]), "residual": res, "tol": tol,
                             "matches": bool(res <= tol and positive), "positive": positive})

    checks: dict = {}
    merge_structure(checks, [solid, *solved, zero_sv])
    diffs = [abs(b - a) for a, b in zip(lams, lams[1:])]
    steps = [b - a for a, b in zip(diffs, diffs[1:])]
    worst = max(steps, default=-math.inf)
    checks["differences_decreasing"] = (worst, 0.0, worst < 0.0)
    checks["beta1_in_unit_interval"] = (beta, 1.0, 0.0 < beta < 1.0)
    if hole_fraction > 0:
        gap = beta - solid.lambda1
        checks["beta1_above_solid"] = (gap, SLACK * e_h, gap > SLACK * e_h)
    zdev = abs(zero_sv.lambda1 - solid.lambda1)
    checks["zero_fraction_reproduces_solid"] = (zdev, 0.0, zdev == 0.0)
    return PerforatedReport(chi, list(eps_list), lams, solid.lambda1, beta, e_h, zero_sv.lambda1, variants, checks)


# --------------------------------------------------------------------------
# grid refinement

@dataclass
class ConvergenceReport:
    n_list: list[int]
    lambda1: list[float]
    differences: list[float]
    orders: list[float]
    checks: dict = field(default_factory=dict)


def grid_convergence(k: KernelSpec, d, n_list: list[int], min_order: float = 1.0,
                     threads: int = 1) -> ConvergenceReport:
    """lambda_1 on grids of spacing (bbox width)/n; Cauchy differences and observed orders."""
    lo, hi = d.bbox()
    width = float(hi[0] - lo[0])
    solved = _pmap(lambda n: solve(k, d, make_grid([d], width / n), f"n={n}"), n_list, threads)
    lams = [sv.lambda1 for sv in solved]
    diffs = [abs(b - a) for a, b in zip(lams, lams[1:])]
    orders = [math.log2(a / b) if b > 0 else math.inf for a, b in zip(diffs, diffs[1:])]
    checks: dict = {}
    merge_structure(checks, solved)
    steps = [b - a for a, b in zip(diffs, diffs[1:])]
    worst = max(steps, default=-math.inf)
    checks["cauchy_monotone"] = (worst, 0.0, worst < 0.0)
    low = min(orders, default=math.inf)
    checks["observed_order"] = (low, min_order, low >= min_order)
    return ConvergenceReport(list(n_list), lams, diffs, orders, checks)
