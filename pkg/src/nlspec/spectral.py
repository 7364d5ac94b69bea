"""Spectra of discretized operators: ordering, simplicity, Perron structure, Rayleigh quotient."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numba
import numpy as np
from scipy import linalg
from scipy.sparse import csgraph, csr_matrix

from .errors import ConvergenceError, NlspecError
from .operator import DiscreteOperator

JACOBI_TOL = 1e-12
JACOBI_SWEEPS = 30


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenpairs sorted by |mu| descending, ties broken by mu descending.

    ``vectors[:, i]`` holds nodal values u_i with sum(w u_i^2) = 1.
    """

    mus: np.ndarray
    vectors: np.ndarray | None
    weights: np.ndarray
    gaps: np.ndarray
    gap_tol: float

    @property
    def lambdas(self) -> np.ndarray:
        return 1.0 - self.mus

    @property
    def simple_flags(self) -> np.ndarray:
        return self.gaps > self.gap_tol

    @property
    def mu1(self) -> float:
        return float(self.mus[0])

    @property
    def lambda1(self) -> float:
        return float(1.0 - self.mus[0])

    def __len__(self):
        return len(self.mus)


@numba.njit(cache=True)
def _jacobi_sweeps(a, tol, max_sweeps):
    n = a.shape[0]
    v = np.eye(n)
    fro = math.sqrt(np.sum(a * a))
    off = 0.0
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += a[i, j] * a[i, j]
        off = math.sqrt(2.0 * off)
        if off <= tol * fro:
            return v, sweep, off, fro
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return v, -1, off, fro


def jacobi_eigh(A: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_SWEEPS):
    """Cyclic Jacobi rotations until the off-diagonal Frobenius norm is below tol*||A||_F.

    Returns (eigenvalues, eigenvectors) in the order the rotations leave them.
    """
    a = np.array(A, dtype=float, order="C")
    if a.ndim != 2 or a.shape[0] != a.shape[1] or not np.array_equal(a, a.T):
        raise NlspecError("spectral", "Jacobi needs a square, exactly symmetric matrix")
    if a.shape[0] == 0:
        return np.zeros(0), np.zeros((0, 0))
    v, sweeps, off, fro = _jacobi_sweeps(a, tol, max_sweeps)
    if sweeps < 0:
        raise ConvergenceError("spectral", f"Jacobi did not converge in {max_sweeps} sweeps: "
                               f"off-diagonal norm {off:.3e} vs target {tol * fro:.3e}")
    return np.diag(a).copy(), v


def _order(mus: np.ndarray) -> np.ndarray:
    return np.lexsort((-mus, -np.abs(mus)))


def _nearest_gaps(mus: np.ndarray) -> np.ndarray:
    if len(mus) < 2:
        return np.full(len(mus), np.inf)
    s = np.argsort(mus, kind="stable")
    d = np.diff(mus[s])
    g = np.empty(len(mus))
    g[s] = np.minimum(np.concatenate([[np.inf], d]), np.concatenate([d, [np.inf]]))
    return g


def _fix_signs(v: np.ndarray) -> np.ndarray:
    # the first entry within round-off of the peak decides, so mirror-symmetric
    # peaks of odd eigenvectors resolve the same way for every solver
    a = np.abs(v)
    idx = np.argmax(a >= (1.0 - 1e-8) * a.max(axis=0), axis=0)
    sign = np.sign(v[idx, np.arange(v.shape[1])])
    sign[sign == 0] = 1.0
    return v * sign


def eigendecompose(op: Union[DiscreteOperator, np.ndarray], method: str = "lapack",
                   vectors: bool = True, gap_tol: float | None = None) -> Spectrum:
    """Full symmetric eigendecomposition of K.

    ``method="jacobi"`` runs the cyclic Jacobi solver; ``"lapack"`` calls the
    divide-and-conquer driver, which is far faster on the larger grids.
    """
    if isinstance(op, DiscreteOperator):
        K, w = op.K, op.weights
    else:
        K = np.asarray(op, dtype=float)
        w = np.ones(len(K))
    if not np.array_equal(K, K.T):
        raise NlspecError("spectral", "K is not exactly symmetric")
    if method == "jacobi":
        mus, V = jacobi_eigh(K)
    elif method == "lapack":
        if vectors:
            mus, V = linalg.eigh(K, driver="evd")
        else:
            mus, V = linalg.eigvalsh(K, driver="evd"), None
    else:
        raise ValueError(f"spectral: unknown method {method!r}")
    order = _order(mus)
    mus = mus[order]
    U = None
    if vectors:
        U = _fix_signs(V[:, order]) / np.sqrt(w)[:, None]
    scale = float(np.max(np.abs(mus), initial=0.0))
    tol = 1e-6 * scale if gap_tol is None else gap_tol
    return Spectrum(mus, U, np.asarray(w, dtype=float), _nearest_gaps(mus), tol)


def power_iteration(K: Union[np.ndarray, Callable], n: int | None = None, tol: float = 1e-14,
                    max_iter: int = 100000) -> tuple[float, np.ndarray]:
    """Dominant eigenpair of a symmetric nonnegative operator, started from the constant vector."""
    if callable(K):
        apply, size = K, n
    else:
        M = np.asarray(K, dtype=float)
        apply, size = (lambda x: M @ x), len(M)
    u = np.ones(size) / math.sqrt(size)
    mu = 0.0
    for _ in range(max_iter):
        v = apply(u)
        mu_new = float(u @ v)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return 0.0, u
        v /= nv
        if abs(mu_new - mu) <= tol * abs(mu_new) and np.linalg.norm(v - u) < 1e-6:
            return mu_new, v
        u, mu = v, mu_new
    raise ConvergenceError("spectral", f"power iteration did not settle in {max_iter} steps")


def rayleigh_lambda1(op: DiscreteOperator, u) -> float:
    """(||u||^2 - <u, J u>) / ||u||^2 in the weighted discrete L^2 product."""
    u = np.asarray(u, dtype=float)
    if u.shape != (op.n,):
        raise NlspecError("spectral", f"vector has shape {u.shape}, expected ({op.n},)")
    v = np.sqrt(op.weights) * u
    nn = float(v @ v)
    if nn == 0.0:
        raise NlspecError("spectral", "Rayleigh quotient of the zero vector")
    return (nn - float(v @ (op.K @ v))) / nn


def detect_simple_systems(s: Spectrum, count: int) -> list[tuple[int, bool]]:
    """(1-based index, is_simple) for the leading ``count`` eigenvalues."""
    if count > len(s):
        raise NlspecError("spectral", f"asked for {count} eigenvalues, spectrum has {len(s)}")
    return [(i + 1, bool(s.gaps[i] > s.gap_tol)) for i in range(count)]


def interaction_components(op: DiscreteOperator) -> int:
    """Connected components of the graph {K_ij > 0}; disconnected parts decouple exactly."""
    n, _ = csgraph.connected_components(csr_matrix(op.K > 0), directed=False)
    return int(n)


def structure_checks(op: DiscreteOperator, s: Spectrum) -> dict[str, tuple[float, float, bool]]:
    """Named spectral invariants as (value, bound, passed).

    Simplicity and positivity of the first eigenvector are only demanded when
    the interaction graph is connected; decoupled pieces of equal shape share
    mu_1.
    """
    out = {}
    target = op.kernel.sup_norm * op.grid_measure
    resid = abs(float(np.sum(s.mus)) - target) / target
    out["trace_identity"] = (resid, 1e-10, resid < 1e-10)
    if s.vectors is not None:
        v = s.vectors * np.sqrt(s.weights)[:, None]
        gram = v.T @ v
        off = float(np.max(np.abs(gram - np.eye(len(gram)))))
        out["eigenvector_orthonormality"] = (off, 1e-10, off < 1e-10)
    out["mu1_positive"] = (s.mu1, 0.0, s.mu1 > 0.0)
    l1 = s.lambda1
    out["lambda1_in_unit_interval"] = (l1, 1.0, 0.0 < l1 < 1.0)
    mu2 = abs(float(s.mus[1])) if len(s) > 1 else 0.0
    out["mu2_nonzero"] = (mu2, 1e-12, mu2 > 1e-12)
    if interaction_components(op) == 1:
        out["mu1_simple"] = (float(s.gaps[0]), s.gap_tol, bool(s.gaps[0] > s.gap_tol))
        if s.vectors is not None:
            mn = float(np.min(s.vectors[:, 0]))
            out["perron_positive"] = (mn, 0.0, mn > 0.0)
    return out
