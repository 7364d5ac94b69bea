"""Domain derivatives of simple eigenvalues and the pull-back of the operator under an imbedding."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .domain import Mapped, PerturbationField, VectorField, boundary_quadrature, check_injective, diameter
from .errors import NlspecError
from .kernel import KernelSpec
from .operator import ContainerGrid, DiscreteOperator, assemble_cut_cell
from .spectral import Spectrum, eigendecompose


def require_smooth(k: KernelSpec) -> None:
    if not k.at_least("C1"):
        raise NlspecError("shape", f"kernel_smoothness: {k.family} is {k.smoothness}, shape calculus needs C1")


@dataclass(frozen=True, eq=False)
class Pullback:
    """P[i, j] = J(h(x_i) - h(x_j)) |det Dh(x_j)| h^N on the base nodes, with w_j = |det Dh(x_j)| h^N."""

    P: np.ndarray
    weights: np.ndarray
    nodes: np.ndarray

    def symmetric_form(self) -> np.ndarray:
        """W^(1/2) P W^(-1/2), symmetric with the spectrum of P."""
        s = np.sqrt(self.weights)
        S = s[:, None] * self.P / s[None, :]
        return 0.5 * (S + S.T)

    def eigenvalues(self) -> np.ndarray:
        return eigendecompose(self.symmetric_form(), vectors=False).mus


def pullback_operator(k: KernelSpec, base, m, g: ContainerGrid) -> Pullback:
    require_smooth(k)
    lo, hi = base.bbox()
    check_injective(m, lo, hi)
    nodes = g.nodes
    x = nodes[base.contains(nodes)]
    if len(x) == 0:
        raise NlspecError("shape", "empty active set: no grid node lies inside the base domain")
    y = m.apply(x)
    det = m.jacobian_det(x)
    if not np.all(det > 0):
        raise NlspecError("shape", "jacobian_positive: det Dh vanishes on the base domain")
    w = det * g.cell_weight
    diff2 = sum((y[:, None, c] - y[None, :, c]) ** 2 for c in range(y.shape[1]))
    return Pullback(k.truncated_sq(diff2) * w[None, :], w, x)


def weighted_selfadjointness_check(P: np.ndarray, w: np.ndarray, trials: int = 16, seed: int = 0) -> float:
    """max |<f, P g>_w - <P f, g>_w| / (|f|_w |g|_w) over seeded random pairs."""
    rng = np.random.default_rng(seed)
    w = np.asarray(w, dtype=float)
    worst = 0.0
    for _ in range(trials):
        f, g = rng.standard_normal((2, len(w)))
        lhs = np.sum(w * f * (P @ g))
        rhs = np.sum(w * (P @ f) * g)
        norm = math.sqrt(np.sum(w * f * f) * np.sum(w * g * g))
        worst = max(worst, abs(lhs - rhs) / norm)
    return worst


def boundary_eigenfunction(op: DiscreteOperator, s: Spectrum, idx: int, points) -> np.ndarray:
    """u(x) = (1/mu) sum_j J(x - x_j) u_j w_j at arbitrary points; ``idx`` is 1-based."""
    mu = float(s.mus[idx - 1])
    if abs(mu) < 1e-10:
        raise NlspecError("shape", f"smoothing identity undefined for |mu| = {abs(mu):.2e}")
    pts = np.asarray(points, dtype=float).reshape(-1, op.nodes.shape[1])
    diff2 = sum((pts[:, None, c] - op.nodes[None, :, c]) ** 2 for c in range(pts.shape[1]))
    return op.kernel.truncated_sq(diff2) @ (s.vectors[:, idx - 1] * op.weights) / mu


@dataclass(frozen=True)
class ShapeDerivativeReport:
    field_name: str
    lambda0: float
    mu0: float
    boundary_integral: float
    boundary_integral_half_m: float
    dlambda_formula: float
    dmu_formula: float
    dlambda_fd: float
    dlambda_forward: float
    dlambda_backward: float
    t: float
    rel_error: float
    abs_error: float
    m: int
    smooth_boundary: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _track(lams: np.ndarray, target: float, gap: float) -> float:
    dist = np.abs(lams - target)
    j = int(np.argmin(dist))
    if not dist[j] < 0.5 * gap:
        raise NlspecError("shape", f"eigenvalue_crossing: nearest eigenvalue moved {dist[j]:.3e}, gap {gap:.3e}")
    return float(lams[j])


def shape_derivative(k: KernelSpec, d, idx: int, V: VectorField, g: ContainerGrid,
                     t_fd: float | None = None, m: int = 256, poly_m: int = 4096,
                     threads: int = 1) -> ShapeDerivativeReport:
    """Boundary formula for d lambda_idx along x + tV(x) next to a central finite difference.

    All three domains are discretized with cut-cell weights on the same grid,
    so the finite difference sees the boundary motion rather than node jumps.
    """
    require_smooth(k)
    bq = boundary_quadrature(d, m)
    bq_half = boundary_quadrature(d, max(8, m // 2))
    t = 1e-3 * diameter(d) if t_fd is None else float(t_fd)

    def solve(tt):
        dom = d if tt == 0.0 else Mapped(d, PerturbationField(V, tt))
        op = assemble_cut_cell(k, dom, g, poly_m)
        return op, eigendecompose(op, vectors=(tt == 0.0))

    if threads > 1:
        with ThreadPoolExecutor(min(threads, 3)) as pool:
            (op0, s0), (_, sp), (_, sm) = pool.map(solve, (0.0, t, -t))
    else:
        (op0, s0), (_, sp), (_, sm) = solve(0.0), solve(t), solve(-t)

    if not s0.simple_flags[idx - 1]:
        raise NlspecError("shape", f"eigenvalue {idx} is not simple (gap {s0.gaps[idx - 1]:.3e})")
    lam0 = float(s0.lambdas[idx - 1])
    mu0 = float(s0.mus[idx - 1])
    gap = float(s0.gaps[idx - 1])
    lp = _track(sp.lambdas, lam0, gap)
    lm = _track(sm.lambdas, lam0, gap)

    def integral(q):
        u = boundary_eigenfunction(op0, s0, idx, q.points)
        vn = np.sum(V(q.points) * q.normals, axis=1)
        return float(np.sum(q.weights * u * u * vn))

    bi = integral(bq)
    dmu = mu0 * bi
    dlam = -(1.0 - lam0) * bi
    fd = (lp - lm) / (2.0 * t)
    abs_err = abs(dlam - fd)
    rel = abs_err / abs(fd) if abs(fd) > 1e-12 else abs_err
    return ShapeDerivativeReport(
        field_name=V.label, lambda0=lam0, mu0=mu0, boundary_integral=bi,
        boundary_integral_half_m=integral(bq_half), dlambda_formula=dlam, dmu_formula=dmu,
        dlambda_fd=fd, dlambda_forward=(lp - lam0) / t, dlambda_backward=(lam0 - lm) / t,
        t=t, rel_error=rel, abs_error=abs_err, m=m, smooth_boundary=bq.smooth)
