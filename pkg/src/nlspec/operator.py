"""Nyström discretization of the truncated convolution operator on a container grid.

K[i, j] = sqrt(w_i w_j) J(x_i - x_j) over the active nodes, which for the
plain midpoint rule (w = h^N) is J(x_i - x_j) h^N. The eigenvalues of K are
those of the weighted Nyström matrix J W.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import shapely
from scipy import linalg, signal

from .domain import boundary_polygon, interval_pieces, lipschitz_inputs
from .errors import ConvergenceError, NlspecError
from .kernel import KernelSpec

MAGIC = b"NLSP"


@dataclass(frozen=True)
class ContainerGrid:
    """Uniform cell-centred lattice on the box [lo, lo + shape*h]."""

    lo: tuple
    h: float
    shape: tuple

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.lo) + self.h * np.asarray(self.shape)

    @property
    def cell_weight(self) -> float:
        return self.h**self.dim

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def nodes(self) -> np.ndarray:
        """Cell centres in lexicographic (C) order, shape (size, dim)."""
        axes = [self.lo[i] + (np.arange(n) + 0.5) * self.h for i, n in enumerate(self.shape)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)

    def refined(self, factor: int = 2) -> "ContainerGrid":
        return ContainerGrid(self.lo, self.h / factor, tuple(n * factor for n in self.shape))

    def check_contains(self, d, margin: int = 1) -> None:
        lo, hi = d.bbox()
        tol = 1e-12 * max(1.0, float(np.max(np.abs(self.hi))))
        if np.any(lo < np.asarray(self.lo) + margin * self.h - tol) or np.any(hi > self.hi - margin * self.h + tol):
            raise NlspecError("operator", f"container overflow: domain bbox {lo}..{hi} "
                              f"not inside {self.lo}..{self.hi} with a {margin}-cell margin")

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "h": self.h, "n_cells": list(self.shape)}


def make_grid(domains, h: float, margin: int = 1) -> ContainerGrid:
    """Smallest origin-anchored lattice of spacing h covering all domains plus a margin."""
    if not h > 0:
        raise ValueError(f"operator: grid spacing must be positive, got {h}")
    los, his = zip(*(d.bbox() for d in domains))
    lo = np.floor(np.min(los, axis=0) / h + 1e-9) - margin
    hi = np.ceil(np.max(his, axis=0) / h - 1e-9) + margin
    return ContainerGrid(tuple(float(v) for v in lo * h), float(h), tuple(int(v) for v in hi - lo))


def grid_from_dict(desc: dict, domains, dim: int) -> ContainerGrid:
    """``{"h": .., "margin": ..}`` or an explicit ``{"lo": [..], "h": .., "n_cells": ..}``."""
    h = float(desc["h"])
    if "lo" in desc:
        n = desc["n_cells"]
        shape = tuple(int(v) for v in (n if isinstance(n, list) else [n] * dim))
        g = ContainerGrid(tuple(float(v) for v in desc["lo"]), h, shape)
        for d in domains:
            g.check_contains(d)
        return g
    return make_grid(domains, h, int(desc.get("margin", 1)))


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Active-node Nyström matrix of the operator restricted to a domain.

    ``active`` indexes ``grid.nodes``; it is ``None`` for cut-cell operators,
    whose nodes are cell-fragment centroids rather than grid nodes.
    """

    grid: ContainerGrid
    kernel: KernelSpec
    domain: object
    nodes: np.ndarray
    weights: np.ndarray
    K: np.ndarray
    active: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def grid_measure(self) -> float:
        return float(np.sum(self.weights))

    @property
    def B(self) -> np.ndarray:
        return np.eye(self.n) - self.K

    def container_matrix(self) -> np.ndarray:
        """The zero-extended matrix on every grid node."""
        if self.active is None:
            raise NlspecError("operator", "cut-cell operators have no container form")
        full = np.zeros((self.grid.size, self.grid.size))
        full[np.ix_(self.active, self.active)] = self.K
        return full

    def row_sums(self) -> np.ndarray:
        """Quadrature of J(x_i - .) over the domain, one value per node."""
        return (self.K @ np.sqrt(self.weights)) / np.sqrt(self.weights)


def _kernel_block(k: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    r2 = np.zeros((len(a), len(b)))
    for c in range(a.shape[1]):
        diff = a[:, None, c] - b[None, :, c]
        r2 += diff * diff
    return k.truncated_sq(r2)


def kernel_matrix(k: KernelSpec, x: np.ndarray, threads: int = 1, block: int = 512) -> np.ndarray:
    """J(x_i - x_j) for all node pairs, mirrored from the upper triangle."""
    n = len(x)
    out = np.empty((n, n))
    starts = list(range(0, n, block))

    def fill(s):
        e = min(n, s + block)
        out[s:e, s:] = _kernel_block(k, x[s:e], x[s:])

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(fill, starts))
    else:
        for s in starts:
            fill(s)
    iu = np.triu_indices(n, 1)
    out[iu[1], iu[0]] = out[iu]
    return out


def assemble(k: KernelSpec, d, g: ContainerGrid, threads: int = 1) -> DiscreteOperator:
    """Midpoint Nyström matrix on the grid nodes lying inside ``d``."""
    if k.dim != d.dim or g.dim != d.dim:
        raise NlspecError("operator", f"dimension mismatch: kernel {k.dim}, domain {d.dim}, grid {g.dim}")
    g.check_contains(d, margin=0)
    nodes = g.nodes
    active = np.flatnonzero(d.contains(nodes))
    if active.size == 0:
        raise NlspecError("operator", "empty active set: no grid node lies inside the domain; refine h")
    x = nodes[active]
    K = kernel_matrix(k, x, threads) * g.cell_weight
    return DiscreteOperator(g, k, d, x, np.full(len(x), g.cell_weight), K, active)


def _cut_cells_1d(d, g: ContainerGrid):
    c = g.nodes[:, 0]
    a, b = c - 0.5 * g.h, c + 0.5 * g.h
    length = np.zeros(len(c))
    moment = np.zeros(len(c))
    for lo, hi in interval_pieces(d):
        left, right = np.maximum(a, lo), np.minimum(b, hi)
        piece = np.clip(right - left, 0.0, None)
        length += piece
        moment += piece * 0.5 * (left + right)
    keep = np.flatnonzero(length > 1e-12 * g.h)
    return (moment[keep] / length[keep])[:, None], length[keep]


def cut_cells(d, g: ContainerGrid, m: int = 4096):
    """Centroids and measures of the pieces cell ∩ d."""
    if g.dim == 1:
        return _cut_cells_1d(d, g)
    geom = boundary_polygon(d, m)
    shapely.prepare(geom)
    c = g.nodes
    half = 0.5 * g.h
    cells = shapely.box(c[:, 0] - half, c[:, 1] - half, c[:, 0] + half, c[:, 1] + half)
    pieces = shapely.intersection(cells, geom)
    area = shapely.area(pieces)
    keep = np.flatnonzero(area > 1e-12 * g.cell_weight)
    cent = shapely.get_coordinates(shapely.centroid(pieces[keep]))
    return cent, area[keep]


def assemble_cut_cell(k: KernelSpec, d, g: ContainerGrid, m: int = 4096, threads: int = 1) -> DiscreteOperator:
    """Nyström matrix with fractional cell weights (measures of cell ∩ d) and centroid nodes.

    The weights vary continuously as the boundary moves through a fixed grid,
    which keeps finite differences in the domain free of membership jumps.
    """
    if k.dim != d.dim:
        raise NlspecError("operator", f"dimension mismatch: kernel {k.dim}, domain {d.dim}")
    g.check_contains(d, margin=0)
    x, w = cut_cells(d, g, m)
    if len(w) == 0:
        raise NlspecError("operator", "empty active set: domain misses every cell; refine h")
    s = np.sqrt(w)
    K = kernel_matrix(k, x, threads) * (s[:, None] * s[None, :])
    return DiscreteOperator(g, k, d, x, w, K, None)


def _check_same(a: DiscreteOperator, b: DiscreteOperator):
    if a.grid != b.grid:
        raise NlspecError("operator", "grid mismatch: operators live on different containers")
    if a.kernel != b.kernel:
        raise NlspecError("operator", "kernel mismatch")
    if a.active is None or b.active is None:
        raise NlspecError("operator", "container comparison needs grid-node operators")


def operator_norm_diff(a: DiscreteOperator, b: DiscreteOperator) -> float:
    """Spectral norm of the difference of the two container-form matrices."""
    _check_same(a, b)
    union = np.union1d(a.active, b.active)
    diff = np.zeros((len(union), len(union)))
    ia = np.searchsorted(union, a.active)
    ib = np.searchsorted(union, b.active)
    diff[np.ix_(ia, ia)] += a.K
    diff[np.ix_(ib, ib)] -= b.K
    ev = linalg.eigvalsh(diff)
    return float(np.max(np.abs(ev)))


def lipschitz_bound(k: KernelSpec, d1, d2, symdiff: Optional[float] = None) -> float:
    """sqrt(2) ||J||_inf sqrt(|d1 ∪ d2| + |d1| + |d2|) sqrt(|d1 Δ d2|)."""
    m1, m2, sd = lipschitz_inputs(d1, d2, symdiff)
    union = 0.5 * (m1 + m2 + sd)
    return math.sqrt(2.0) * k.sup_norm * math.sqrt(union + m1 + m2) * math.sqrt(sd)


# --------------------------------------------------------------------------
# binary dump

def dump_operator(op: DiscreteOperator, path) -> None:
    """16-byte header (b"NLSP", u32 n, u32 dim, u32 reserved = 0) then K row-major as little-endian float64."""
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<III", op.n, op.grid.dim, 0))
        fh.write(np.ascontiguousarray(op.K, dtype="<f8").tobytes())


def read_operator(path) -> tuple[np.ndarray, int]:
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) != 16 or head[:4] != MAGIC:
            raise NlspecError("operator", f"{path}: not an operator dump")
        n, dim, _ = struct.unpack("<III", head[4:])
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n * n:
        raise NlspecError("operator", f"{path}: expected {n * n} entries, found {data.size}")
    return data.reshape(n, n).astype(float), dim


# --------------------------------------------------------------------------
# matrix-free first eigenvalue on fine grids

def convolution_stencil(k: KernelSpec, h: float) -> np.ndarray:
    r = int(math.ceil(k.support_radius / h))
    offs = np.arange(-r, r + 1) * h
    mesh = np.meshgrid(*([offs] * k.dim), indexing="ij")
    return k.truncated_sq(sum(m * m for m in mesh)) * h**k.dim


def lambda1_matrix_free(k: KernelSpec, d, g: ContainerGrid, tol: float = 1e-13, max_iter: int = 20000) -> float:
    """lambda_1 by power iteration with FFT convolution, for grids too large for dense K."""
    mask = d.contains(g.nodes).reshape(g.shape).astype(float)
    if not mask.any():
        raise NlspecError("operator", "empty active set: no grid node lies inside the domain; refine h")
    stencil = convolution_stencil(k, g.h)
    u = mask / math.sqrt(mask.sum())
    mu = 0.0
    for _ in range(max_iter):
        v = signal.fftconvolve(u, stencil, mode="same") * mask
        mu_new = float(np.sum(u * v))
        v /= np.linalg.norm(v)
        if abs(mu_new - mu) <= tol * abs(mu_new):
            return 1.0 - mu_new
        u, mu = v, mu_new
    raise ConvergenceError("operator", f"power iteration did not settle in {max_iter} steps")
