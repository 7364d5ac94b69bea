"""Radial dispersal kernels J: nonnegative, radially nonincreasing, unit mass."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

FAMILIES = ("bump", "gaussian", "tent")
SMOOTHNESS = {"bump": "C1", "tent": "C0", "gaussian": "Cinf"}
_SMOOTHNESS_ORDER = {"C0": 0, "C1": 1, "Cinf": 2}

# Gaussian tails beyond this many standard deviations are dropped at assembly.
GAUSSIAN_CUTOFF = 8.0
MASS_TOL = 1e-8


@dataclass(frozen=True)
class KernelSpec:
    """A normalized radial kernel.

    ``width`` is the support radius for ``bump``/``tent`` and the standard
    deviation for ``gaussian``. ``mass_residual`` is ``|int J - 1|`` measured
    by adaptive radial quadrature when the kernel was built.
    """

    family: str
    width: float
    dim: int
    norm_const: float
    smoothness: str
    mass_residual: float

    def profile_sq(self, r2):
        """Kernel value as a function of the squared radius."""
        r2 = np.asarray(r2, dtype=float)
        if self.family == "bump":
            s = np.clip(1.0 - r2 / self.width**2, 0.0, None)
            return self.norm_const * s * s
        if self.family == "gaussian":
            return self.norm_const * np.exp(-0.5 * r2 / self.width**2)
        s = np.clip(1.0 - np.sqrt(r2) / self.width, 0.0, None)
        return self.norm_const * s

    def profile(self, r):
        r = np.asarray(r, dtype=float)
        return self.profile_sq(r * r)

    def truncated_sq(self, r2):
        """``profile_sq`` with the gaussian tail cut at ``GAUSSIAN_CUTOFF`` sigma."""
        vals = self.profile_sq(r2)
        if self.family == "gaussian":
            vals = np.where(r2 > (GAUSSIAN_CUTOFF * self.width) ** 2, 0.0, vals)
        return vals

    def __call__(self, x):
        return evaluate(self, x)

    @property
    def sup_norm(self) -> float:
        """``||J||_inf``, attained at the origin."""
        return self.norm_const

    @property
    def support_radius(self) -> float:
        """Radius beyond which assembly treats J as zero."""
        if self.family == "gaussian":
            return GAUSSIAN_CUTOFF * self.width
        return self.width

    @property
    def truncation_mass(self) -> float:
        """Mass discarded by the assembly cutoff (zero for compact kernels)."""
        if self.family != "gaussian":
            return 0.0
        c = GAUSSIAN_CUTOFF
        if self.dim == 1:
            return math.erfc(c / math.sqrt(2.0))
        return math.exp(-0.5 * c * c)

    def at_least(self, smoothness: str) -> bool:
        return _SMOOTHNESS_ORDER[self.smoothness] >= _SMOOTHNESS_ORDER[smoothness]

    def to_dict(self) -> dict:
        return {"family": self.family, "width": self.width, "dim": self.dim}


def _analytic_norm_const(family: str, width: float, dim: int) -> float:
    if family == "bump":
        # 1-D: int (1-x^2/d^2)^2 = 16 d / 15 ; 2-D: pi d^2 / 3
        return 15.0 / (16.0 * width) if dim == 1 else 3.0 / (math.pi * width**2)
    if family == "gaussian":
        return 1.0 / (math.sqrt(2.0 * math.pi) * width) if dim == 1 else 1.0 / (2.0 * math.pi * width**2)
    # tent, 1-D: triangle area d ; 2-D: cone volume pi d^2 / 3
    return 1.0 / width if dim == 1 else 3.0 / (math.pi * width**2)


def radial_mass(family: str, width: float, dim: int, norm_const: float) -> float:
    """Integral of J over R^dim by adaptive quadrature in the radius."""
    unit = KernelSpec(family, width, dim, 1.0, SMOOTHNESS[family], 0.0)
    if dim == 1:
        def f(r):
            return 2.0 * unit.profile(r)
    else:
        def f(r):
            return 2.0 * math.pi * r * unit.profile(r)
    if family == "gaussian":
        val, _ = integrate.quad(f, 0.0, math.inf, epsabs=1e-14, epsrel=1e-13, limit=200)
    else:
        val, _ = integrate.quad(f, 0.0, width, epsabs=1e-14, epsrel=1e-13, limit=200)
    return norm_const * float(val)


def make_kernel(family: str, width: float, dim: int) -> KernelSpec:
    """Build a unit-mass radial kernel and verify its mass by quadrature."""
    if family not in FAMILIES:
        raise ValueError(f"kernel: unknown family {family!r}; expected one of {FAMILIES}")
    if not (isinstance(width, (int, float)) and math.isfinite(width) and width > 0):
        raise ValueError(f"kernel: width must be a positive real, got {width!r}")
    if dim not in (1, 2):
        raise ValueError(f"kernel: dim must be 1 or 2, got {dim!r}")
    c = _analytic_norm_const(family, float(width), dim)
    residual = abs(radial_mass(family, float(width), dim, c) - 1.0)
    if residual > MASS_TOL:
        raise ValueError(f"kernel: unit_mass violated, |int J - 1| = {residual:.3e}")
    return KernelSpec(family, float(width), dim, c, SMOOTHNESS[family], residual)


def evaluate(k: KernelSpec, x) -> np.ndarray:
    """J(x) for a point or an array of points of shape ``(..., dim)``.

    A 1-D kernel also accepts scalars and 1-D arrays of abscissae.
    """
    x = np.asarray(x, dtype=float)
    if k.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        r2 = x * x
    else:
        if x.ndim == 0 or x.shape[-1] != k.dim:
            raise ValueError(f"kernel: point dimension {x.shape[-1:] or 0} does not match dim={k.dim}")
        r2 = np.sum(x * x, axis=-1)
    return k.profile_sq(r2)


def kernel_from_dict(desc: dict) -> KernelSpec:
    return make_kernel(desc["family"], desc["width"], desc["dim"])
