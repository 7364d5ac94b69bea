"""Bounded open sets given analytically, plus the imbeddings used to deform them.

Every variant exposes ``dim``, ``contains(points)``, ``bbox()``,
``exact_measure()`` (``None`` when no closed form exists) and ``to_dict()``.
Membership on the topological boundary is False.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import shapely

SUPERSAMPLE = 4


# --------------------------------------------------------------------------
# vector fields and maps

@dataclass(frozen=True)
class VectorField:
    """Deformation field V for the family h_t(x) = x + t V(x).

    Supported names: ``constant`` (uses ``direction``), ``dilation`` (V = x),
    ``rotation`` (V = (-x2, x1), 2-D only) and ``radial_bump``
    (V = exp(-|x|^2) x).
    """

    name: str
    direction: Optional[tuple] = None

    def __post_init__(self):
        if self.name not in ("constant", "dilation", "rotation", "radial_bump"):
            raise ValueError(f"domain: unknown vector field {self.name!r}")
        if self.name == "constant" and self.direction is None:
            raise ValueError("domain: constant field needs a direction")

    @property
    def label(self) -> str:
        if self.name == "constant":
            return "translation"
        return self.name

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.name == "constant":
            return np.broadcast_to(np.asarray(self.direction, dtype=float), x.shape).copy()
        if self.name == "dilation":
            return x.copy()
        if self.name == "rotation":
            if x.shape[-1] != 2:
                raise ValueError("domain: rotation field is 2-D only")
            return np.stack([-x[..., 1], x[..., 0]], axis=-1)
        return np.exp(-np.sum(x * x, axis=-1))[..., None] * x

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        eye = np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n))
        if self.name == "constant":
            return np.zeros_like(eye)
        if self.name == "dilation":
            return eye.copy()
        if self.name == "rotation":
            rot = np.array([[0.0, -1.0], [1.0, 0.0]])
            return np.broadcast_to(rot, x.shape[:-1] + (2, 2)).copy()
        g = np.exp(-np.sum(x * x, axis=-1))[..., None, None]
        return g * (eye - 2.0 * x[..., :, None] * x[..., None, :])

    def to_dict(self) -> dict:
        d = {"name": self.name}
        if self.direction is not None:
            d["direction"] = list(self.direction)
        return d


@dataclass(frozen=True)
class AffineDiagonal:
    scales: tuple
    kind: str = field(default="affine_diagonal", init=False)

    def apply(self, x):
        return np.asarray(x, dtype=float) * np.asarray(self.scales)

    def inverse(self, y):
        return np.asarray(y, dtype=float) / np.asarray(self.scales)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.diag(self.scales).astype(float), x.shape[:-1] + (x.shape[-1],) * 2).copy()

    def jacobian_det(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], abs(float(np.prod(self.scales))))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "scales": list(self.scales)}


@dataclass(frozen=True)
class Dilation:
    factor: float
    kind: str = field(default="dilation", init=False)

    def apply(self, x):
        return self.factor * np.asarray(x, dtype=float)

    def inverse(self, y):
        return np.asarray(y, dtype=float) / self.factor

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        return np.broadcast_to(self.factor * np.eye(n), x.shape[:-1] + (n, n)).copy()

    def jacobian_det(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], abs(self.factor) ** x.shape[-1])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "factor": self.factor}


@dataclass(frozen=True)
class PerturbationField:
    """h(x) = x + t V(x)."""

    V: VectorField
    t: float
    kind: str = field(default="perturbation_field", init=False)

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        return x + self.t * self.V(x)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        return np.eye(n) + self.t * self.V.jacobian(x)

    def jacobian_det(self, x):
        return np.abs(np.linalg.det(self.jacobian(x)))

    def inverse(self, y, iters: int = 50):
        y = np.asarray(y, dtype=float)
        x = y - self.t * self.V(y)
        for _ in range(iters):
            r = self.apply(x) - y
            if np.max(np.abs(r), initial=0.0) < 1e-15:
                break
            x = x - np.linalg.solve(self.jacobian(x), r[..., None])[..., 0]
        return x

    def to_dict(self) -> dict:
        return {"kind": self.kind, "field": self.V.to_dict(), "t": self.t}


MapSpec = Union[AffineDiagonal, Dilation, PerturbationField]


def check_injective(m: MapSpec, lo, hi, samples: int = 12) -> float:
    """Sampled lower bound of |h(x)-h(y)|/|x-y| and det Dh over a box.

    Raises ``ValueError`` if the map folds or its Jacobian vanishes.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    axes = [np.linspace(a, b, samples) for a, b in zip(lo, hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    img = m.apply(pts)
    dx = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    dy = np.linalg.norm(img[:, None, :] - img[None, :, :], axis=-1)
    off = ~np.eye(len(pts), dtype=bool)
    ratio = float(np.min(dy[off] / dx[off]))
    det = float(np.min(m.jacobian_det(pts)))
    if not ratio > 1e-8:
        raise ValueError(f"domain: map_injective violated, sampled ratio {ratio:.3e}")
    if not det > 1e-8:
        raise ValueError(f"domain: jacobian_positive violated, min det {det:.3e}")
    return min(ratio, det)


# --------------------------------------------------------------------------
# domain variants

def _pts(x, dim):
    x = np.asarray(x, dtype=float)
    if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != dim:
        raise ValueError(f"domain: point dimension {x.shape[-1]} does not match dim={dim}")
    return x


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple
    variant: str = field(default="box", init=False)

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or not all(a < b for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"domain: box needs lo < hi componentwise, got {self.lo}, {self.hi}")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, x):
        x = _pts(x, self.dim)
        return np.all((x > np.asarray(self.lo)) & (x < np.asarray(self.hi)), axis=-1)

    def bbox(self):
        return np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)

    def exact_measure(self):
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def to_dict(self):
        return {"variant": "box", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float
    variant: str = field(default="ball", init=False)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"domain: ball radius must be positive, got {self.radius}")

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, x):
        x = _pts(x, self.dim)
        return np.sum((x - np.asarray(self.center)) ** 2, axis=-1) < self.radius**2

    def bbox(self):
        c = np.asarray(self.center, dtype=float)
        return c - self.radius, c + self.radius

    def exact_measure(self):
        return 2.0 * self.radius if self.dim == 1 else math.pi * self.radius**2

    def to_dict(self):
        return {"variant": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class UnionOfBalls:
    balls: tuple
    variant: str = field(default="union_of_balls", init=False)

    def __post_init__(self):
        if not self.balls:
            raise ValueError("domain: union_of_balls needs at least one ball")
        for i, a in enumerate(self.balls):
            for b in self.balls[i + 1:]:
                dist = float(np.linalg.norm(np.subtract(a.center, b.center)))
                if not dist > a.radius + b.radius:
                    raise ValueError("domain: union_of_balls must be pairwise disjoint")

    @property
    def dim(self) -> int:
        return self.balls[0].dim

    def contains(self, x):
        x = _pts(x, self.dim)
        out = np.zeros(x.shape[:-1], dtype=bool)
        for b in self.balls:
            out |= b.contains(x)
        return out

    def bbox(self):
        los, his = zip(*(b.bbox() for b in self.balls))
        return np.min(los, axis=0), np.max(his, axis=0)

    def exact_measure(self):
        return float(sum(b.exact_measure() for b in self.balls))

    def to_dict(self):
        return {"variant": "union_of_balls",
                "balls": [{"center": list(b.center), "radius": b.radius} for b in self.balls]}


@dataclass(frozen=True)
class Rough:
    """{(x, y): 0 < x < 1, 0 < y < 1 + sin(2 pi n x) / n}."""

    n: int
    variant: str = field(default="rough", init=False)

    def __post_init__(self):
        if not (isinstance(self.n, int) and self.n >= 1):
            raise ValueError(f"domain: rough needs a positive integer n, got {self.n!r}")

    dim = 2

    def top(self, x):
        return 1.0 + np.sin(2.0 * np.pi * self.n * x) / self.n

    def contains(self, x):
        x = _pts(x, 2)
        u, v = x[..., 0], x[..., 1]
        return (u > 0) & (u < 1) & (v > 0) & (v < self.top(u))

    def bbox(self):
        return np.array([0.0, 0.0]), np.array([1.0, 1.0 + 1.0 / self.n])

    def exact_measure(self):
        # the sine integrates to zero over whole periods
        return 1.0

    def to_dict(self):
        return {"variant": "rough", "n": self.n}


@dataclass(frozen=True)
class Perforated:
    """``base`` minus the closed holes eps*(k + A), k in Z^N, anchored at the origin.

    The unit cell is Q = (0,1)^N; the hole A is a concentric sub-box (or ball)
    of Q occupying ``hole_fraction`` of it.
    """

    eps: float
    hole_fraction: float
    base: Box
    hole: str = "box"
    variant: str = field(default="perforated", init=False)

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"domain: perforated eps must be positive, got {self.eps}")
        if not 0.0 <= self.hole_fraction < 1.0:
            raise ValueError(f"domain: hole_fraction must lie in [0, 1), got {self.hole_fraction}")
        if self.hole not in ("box", "ball"):
            raise ValueError(f"domain: hole must be 'box' or 'ball', got {self.hole!r}")
        if self.hole == "ball" and self.hole_radius > 0.5:
            raise ValueError("domain: ball hole does not fit inside the unit cell")

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def chi(self) -> float:
        """|Q \\ A| / |Q|."""
        return 1.0 - self.hole_fraction

    @property
    def hole_side(self) -> float:
        """Side of the box hole relative to the cell."""
        return self.hole_fraction ** (1.0 / self.dim)

    @property
    def hole_radius(self) -> float:
        """Radius of the ball hole relative to the cell."""
        if self.dim == 1:
            return self.hole_fraction / 2.0
        return math.sqrt(self.hole_fraction / math.pi)

    def in_hole(self, x):
        x = _pts(x, self.dim)
        if self.hole_fraction == 0.0:
            return np.zeros(x.shape[:-1], dtype=bool)
        f = x / self.eps
        f = f - np.floor(f) - 0.5
        if self.hole == "box":
            return np.all(np.abs(f) <= 0.5 * self.hole_side, axis=-1)
        return np.sum(f * f, axis=-1) <= self.hole_radius**2

    def contains(self, x):
        x = _pts(x, self.dim)
        return self.base.contains(x) & ~self.in_hole(x)

    def bbox(self):
        return self.base.bbox()

    def exact_measure(self):
        ratios = np.concatenate([np.asarray(self.base.lo), np.asarray(self.base.hi)]) / self.eps
        if np.all(np.abs(ratios - np.round(ratios)) < 1e-9):
            return self.base.exact_measure() * self.chi
        return None

    def to_dict(self):
        return {"variant": "perforated", "eps": self.eps, "hole_fraction": self.hole_fraction,
                "base": [[a, b] for a, b in zip(self.base.lo, self.base.hi)], "hole": self.hole}


@dataclass(frozen=True)
class Mapped:
    """Image h(base) of a domain under an imbedding."""

    base: object
    map: MapSpec
    variant: str = field(default="mapped", init=False)

    def __post_init__(self):
        lo, hi = self.base.bbox()
        check_injective(self.map, lo, hi)

    @property
    def dim(self) -> int:
        return self.base.dim

    def contains(self, x):
        x = _pts(x, self.dim)
        return self.base.contains(self.map.inverse(x))

    def bbox(self):
        lo, hi = self.base.bbox()
        if isinstance(self.map, (AffineDiagonal, Dilation)):
            a, b = self.map.apply(lo), self.map.apply(hi)
            return np.minimum(a, b), np.maximum(a, b)
        axes = [np.linspace(u, v, 65) for u, v in zip(lo, hi)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        img = self.map.apply(pts)
        pad = 1e-6 * float(np.max(hi - lo))
        return img.min(axis=0) - pad, img.max(axis=0) + pad

    def exact_measure(self):
        base = self.base.exact_measure()
        if base is None or isinstance(self.map, PerturbationField):
            return None
        return base * float(self.map.jacobian_det(np.zeros(self.dim)))

    def to_dict(self):
        return {"variant": "mapped", "base": self.base.to_dict(), "map": self.map.to_dict()}


@dataclass(frozen=True)
class Polygon:
    vertices: tuple
    variant: str = field(default="polygon", init=False)

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise ValueError("domain: polygon needs at least three vertices")
        if not shapely.Polygon(self.vertices).is_valid:
            raise ValueError("domain: polygon is self-intersecting")

    dim = 2

    @property
    def shape(self):
        return shapely.Polygon(self.vertices)

    def contains(self, x):
        x = _pts(x, 2)
        flat = x.reshape(-1, 2)
        out = shapely.contains_xy(self.shape, flat[:, 0], flat[:, 1])
        return out.reshape(x.shape[:-1])

    def bbox(self):
        v = np.asarray(self.vertices, dtype=float)
        return v.min(axis=0), v.max(axis=0)

    def exact_measure(self):
        return float(self.shape.area)

    def to_dict(self):
        return {"variant": "polygon", "vertices": [list(v) for v in self.vertices]}


Domain = Union[Box, Ball, UnionOfBalls, Rough, Perforated, Mapped, Polygon]


def unit_square() -> Box:
    return Box((0.0, 0.0), (1.0, 1.0))


# --------------------------------------------------------------------------
# measures

def _count_inside(pred, lo, hi, n_cells: int, chunk: int = 1 << 21) -> float:
    """Measure of {pred} in the box [lo, hi] by supersampled cell counting."""
    dim = len(lo)
    m = n_cells * SUPERSAMPLE
    step = (hi - lo) / m
    cell = float(np.prod(step))
    if dim == 1:
        x = lo[0] + (np.arange(m) + 0.5) * step[0]
        return float(np.count_nonzero(pred(x[:, None]))) * cell
    ys = lo[1] + (np.arange(m) + 0.5) * step[1]
    rows = max(1, chunk // m)
    total = 0
    for start in range(0, m, rows):
        xs = lo[0] + (np.arange(start, min(m, start + rows)) + 0.5) * step[0]
        pts = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
        total += int(np.count_nonzero(pred(pts)))
    return total * cell


def _refine(pred, lo, hi, rtol=1e-3, start=64, cap=None):
    dim = len(lo)
    cap = cap or (1 << 14 if dim == 1 else 512)
    n = start
    prev = _count_inside(pred, lo, hi, n)
    while True:
        n *= 2
        cur = _count_inside(pred, lo, hi, n)
        err = abs(cur - prev)
        if err <= rtol * max(abs(cur), 1e-12) or n >= cap:
            return cur, err
        prev = cur


def measure_estimate(d) -> tuple[float, float]:
    """(measure, error estimate); the error is 0 for closed forms."""
    exact = d.exact_measure()
    if exact is not None:
        return float(exact), 0.0
    lo, hi = d.bbox()
    return _refine(d.contains, lo, hi)


def measure(d) -> float:
    return measure_estimate(d)[0]


def _lens_area(r1, r2, dist):
    if dist >= r1 + r2:
        return 0.0
    if dist <= abs(r1 - r2):
        return math.pi * min(r1, r2) ** 2
    a1 = r1 * r1 * math.acos((dist * dist + r1 * r1 - r2 * r2) / (2 * dist * r1))
    a2 = r2 * r2 * math.acos((dist * dist + r2 * r2 - r1 * r1) / (2 * dist * r2))
    tri = 0.5 * math.sqrt((-dist + r1 + r2) * (dist + r1 - r2) * (dist - r1 + r2) * (dist + r1 + r2))
    return a1 + a2 - tri


def _closed_form_symdiff(d1, d2):
    if d1 == d2:
        return 0.0
    if isinstance(d1, Box) and isinstance(d2, Box):
        lo = np.maximum(d1.lo, d2.lo)
        hi = np.minimum(d1.hi, d2.hi)
        inter = float(np.prod(np.clip(hi - lo, 0.0, None)))
        return d1.exact_measure() + d2.exact_measure() - 2.0 * inter
    if isinstance(d1, Ball) and isinstance(d2, Ball):
        dist = float(np.linalg.norm(np.subtract(d1.center, d2.center)))
        if d1.dim == 1:
            inter = max(0.0, min(d1.center[0] + d1.radius, d2.center[0] + d2.radius)
                        - max(d1.center[0] - d1.radius, d2.center[0] - d2.radius))
        else:
            inter = _lens_area(d1.radius, d2.radius, dist)
        return d1.exact_measure() + d2.exact_measure() - 2.0 * inter
    if isinstance(d2, Rough) and d1 == unit_square():
        d1, d2 = d2, d1
    if isinstance(d1, Rough) and d2 == unit_square():
        # |sin| integrates to 2/pi over any whole number of periods
        return 2.0 / (math.pi * d1.n)
    return None


def symmetric_difference_estimate(d1, d2) -> tuple[float, float]:
    """Subcell-counting estimate of |d1 \\ d2| + |d2 \\ d1| with its error estimate."""
    if d1.dim != d2.dim:
        raise ValueError("domain: symmetric difference needs domains of equal dimension")
    lo1, hi1 = d1.bbox()
    lo2, hi2 = d2.bbox()
    lo, hi = np.minimum(lo1, lo2), np.maximum(hi1, hi2)
    return _refine(lambda x: d1.contains(x) ^ d2.contains(x), lo, hi)


def symmetric_difference_measure(d1, d2) -> float:
    if d1.dim != d2.dim:
        raise ValueError("domain: symmetric difference needs domains of equal dimension")
    closed = _closed_form_symdiff(d1, d2)
    if closed is not None:
        return closed
    return symmetric_difference_estimate(d1, d2)[0]


def symmetric_difference_report(d1, d2) -> dict:
    """Closed form (if any) next to the counting estimate; flags disagreement > 1e-3."""
    closed = _closed_form_symdiff(d1, d2)
    est, err = symmetric_difference_estimate(d1, d2)
    flagged = closed is not None and abs(closed - est) > 1e-3
    return {"closed_form": closed, "estimate": est, "estimate_error": err, "flagged": flagged}


def union_measure(d1, d2, symdiff: Optional[float] = None) -> float:
    if symdiff is None:
        symdiff = symmetric_difference_measure(d1, d2)
    return 0.5 * (measure(d1) + measure(d2) + symdiff)


def lipschitz_inputs(d1, d2, symdiff: Optional[float] = None) -> tuple[float, float, float]:
    """(|d1|, |d2|, |d1 Δ d2|), the ingredients of the operator-difference bound."""
    if symdiff is None:
        symdiff = symmetric_difference_measure(d1, d2)
    return measure(d1), measure(d2), float(symdiff)


def ball_of_same_measure(d) -> Ball:
    m = measure(d)
    if not m > 0:
        raise ValueError("domain: cannot match a zero-measure domain with a ball")
    if d.dim == 1:
        return Ball((0.0,), m / 2.0)
    return Ball((0.0, 0.0), math.sqrt(m / math.pi))


def diameter(d) -> float:
    if isinstance(d, Ball):
        return 2.0 * d.radius
    lo, hi = d.bbox()
    return float(np.linalg.norm(hi - lo))


# --------------------------------------------------------------------------
# boundary sampling

@dataclass(frozen=True)
class BoundaryQuadrature:
    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    smooth: bool = True

    def __len__(self):
        return len(self.weights)


def _split_counts(lengths, m):
    lengths = np.asarray(lengths, dtype=float)
    counts = np.maximum(1, np.floor(m * lengths / lengths.sum()).astype(int))
    i = 0
    while counts.sum() < m:
        counts[np.argsort(-lengths)[i % len(lengths)]] += 1
        i += 1
    return counts


def _edges_quadrature(vertices, m):
    v = np.asarray(vertices, dtype=float)
    if shapely.Polygon(v).exterior.is_ccw is False:
        v = v[::-1]
    edges = np.roll(v, -1, axis=0) - v
    lengths = np.linalg.norm(edges, axis=1)
    counts = _split_counts(lengths, m)
    pts, nrm, wts = [], [], []
    for a, e, length, c in zip(v, edges, lengths, counts):
        s = (np.arange(c) + 0.5) / c
        pts.append(a + s[:, None] * e)
        # outward normal of a counter-clockwise boundary
        nrm.append(np.tile([e[1] / length, -e[0] / length], (c, 1)))
        wts.append(np.full(c, length / c))
    return BoundaryQuadrature(np.concatenate(pts), np.concatenate(nrm), np.concatenate(wts), smooth=False)


def _ball_quadrature(b: Ball, m):
    c = np.asarray(b.center, dtype=float)
    if b.dim == 1:
        pts = np.array([[c[0] - b.radius], [c[0] + b.radius]])
        return BoundaryQuadrature(pts, np.array([[-1.0], [1.0]]), np.ones(2))
    theta = 2.0 * np.pi * np.arange(m) / m
    nrm = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return BoundaryQuadrature(c + b.radius * nrm, nrm, np.full(m, 2.0 * np.pi * b.radius / m))


def boundary_quadrature(d, m: int = 256) -> BoundaryQuadrature:
    """Boundary samples with outward unit normals and arc-length weights."""
    if m < 8:
        raise ValueError("domain: boundary quadrature needs m >= 8")
    if isinstance(d, Ball):
        return _ball_quadrature(d, m)
    if isinstance(d, Box):
        if d.dim == 1:
            pts = np.array([[d.lo[0]], [d.hi[0]]])
            return BoundaryQuadrature(pts, np.array([[-1.0], [1.0]]), np.ones(2))
        (x0, y0), (x1, y1) = d.lo, d.hi
        return _edges_quadrature([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], m)
    if isinstance(d, Polygon):
        return _edges_quadrature(d.vertices, m)
    if isinstance(d, UnionOfBalls):
        counts = _split_counts([b.radius for b in d.balls], m)
        parts = [_ball_quadrature(b, int(c)) for b, c in zip(d.balls, counts)]
        return BoundaryQuadrature(*(np.concatenate([getattr(p, k) for p in parts])
                                    for k in ("points", "normals", "weights")))
    if isinstance(d, Mapped):
        bq = boundary_quadrature(d.base, m)
        jac = d.map.jacobian(bq.points)
        det = d.map.jacobian_det(bq.points)
        # Nanson: N' dS' = det(Dh) Dh^{-T} N dS
        cof = np.linalg.solve(np.swapaxes(jac, -1, -2), bq.normals[..., None])[..., 0]
        scale = np.linalg.norm(cof, axis=-1)
        return BoundaryQuadrature(d.map.apply(bq.points), cof / scale[:, None],
                                  bq.weights * det * scale, smooth=bq.smooth)
    raise ValueError(f"domain: no boundary parameterization for variant {d.variant!r}")


def interval_pieces(d) -> list[tuple[float, float]]:
    """The open intervals making up a 1-D domain."""
    if d.dim != 1:
        raise ValueError("domain: interval pieces are 1-D only")
    if isinstance(d, Box):
        return [(d.lo[0], d.hi[0])]
    if isinstance(d, Ball):
        return [(d.center[0] - d.radius, d.center[0] + d.radius)]
    if isinstance(d, UnionOfBalls):
        return sorted(p for b in d.balls for p in interval_pieces(b))
    if isinstance(d, Mapped):
        out = []
        for a, b in interval_pieces(d.base):
            ya, yb = (float(v) for v in d.map.apply(np.array([[a], [b]]))[:, 0])
            out.append((min(ya, yb), max(ya, yb)))
        return sorted(out)
    raise ValueError(f"domain: no interval description for variant {d.variant!r}")


def boundary_polygon(d, m: int = 4096):
    """Polygonal approximation of a 2-D domain, as a shapely geometry.

    Mapped domains push a densely sampled base boundary through the map, so
    the vertices move smoothly with the map parameters.
    """
    if d.dim != 2:
        raise ValueError("domain: boundary polygons are 2-D only")
    if isinstance(d, Ball):
        theta = 2.0 * np.pi * np.arange(m) / m
        return shapely.Polygon(np.asarray(d.center) + d.radius * np.stack([np.cos(theta), np.sin(theta)], 1))
    if isinstance(d, Box):
        return shapely.box(d.lo[0], d.lo[1], d.hi[0], d.hi[1])
    if isinstance(d, Polygon):
        return d.shape
    if isinstance(d, UnionOfBalls):
        return shapely.MultiPolygon([boundary_polygon(b, m) for b in d.balls])
    if isinstance(d, Mapped):
        base = d.base
        if isinstance(base, Box):
            ring = shapely.segmentize(boundary_polygon(base), max_segment_length=float(
                np.sum(np.subtract(base.hi, base.lo))) * 2.0 / m)
        else:
            ring = boundary_polygon(base, m)
        geoms = list(ring.geoms) if isinstance(ring, shapely.MultiPolygon) else [ring]
        out = [shapely.Polygon(d.map.apply(np.asarray(g.exterior.coords)[:-1])) for g in geoms]
        return out[0] if len(out) == 1 else shapely.MultiPolygon(out)
    raise ValueError(f"domain: no boundary parameterization for variant {d.variant!r}")


# --------------------------------------------------------------------------
# JSON descriptors

def map_from_dict(desc: dict) -> MapSpec:
    kind = desc["kind"]
    if kind == "affine_diagonal":
        return AffineDiagonal(tuple(float(s) for s in desc["scales"]))
    if kind == "dilation":
        return Dilation(float(desc["factor"]))
    if kind == "perturbation_field":
        return PerturbationField(field_from_dict(desc["field"]), float(desc["t"]))
    raise ValueError(f"domain: unknown map kind {kind!r}")


def field_from_dict(desc: dict) -> VectorField:
    direction = desc.get("direction")
    return VectorField(desc["name"], tuple(float(v) for v in direction) if direction is not None else None)


def domain_from_dict(desc: dict):
    v = desc["variant"]
    if v == "box":
        return Box(tuple(float(a) for a in desc["lo"]), tuple(float(b) for b in desc["hi"]))
    if v == "ball":
        return Ball(tuple(float(c) for c in desc["center"]), float(desc["radius"]))
    if v == "union_of_balls":
        return UnionOfBalls(tuple(Ball(tuple(float(c) for c in b["center"]), float(b["radius"]))
                                  for b in desc["balls"]))
    if v == "rough":
        return Rough(int(desc["n"]))
    if v == "perforated":
        base = desc.get("base", [[0.0, 1.0], [0.0, 1.0]])
        return Perforated(float(desc["eps"]), float(desc["hole_fraction"]),
                          Box(tuple(float(a) for a, _ in base), tuple(float(b) for _, b in base)),
                          desc.get("hole", "box"))
    if v == "mapped":
        return Mapped(domain_from_dict(desc["base"]), map_from_dict(desc["map"]))
    if v == "polygon":
        return Polygon(tuple(tuple(float(c) for c in p) for p in desc["vertices"]))
    raise ValueError(f"domain: unknown variant {v!r}")
