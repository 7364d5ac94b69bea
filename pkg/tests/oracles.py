"""Independent reference computations used by the tests.

Nothing here imports the package's assembly or eigen code.
"""

import math

import numpy as np


def bump(delta, dim):
    c = 15.0 / (16.0 * delta) if dim == 1 else 3.0 / (math.pi * delta * delta)

    def J(r):
        return c * np.clip(1.0 - np.asarray(r) ** 2 / delta**2, 0.0, None) ** 2

    return J


def radial_disk_mu1(delta, radius, ns=300, nt=2000):
    """Largest eigenvalue of the bump-kernel operator on a disk, continuum limit.

    The first eigenfunction is radial, so the problem reduces to a 1-D integral
    operator in r with the angular integral done by the midpoint rule; the
    radial direction uses Gauss-Legendre nodes and a symmetric weighting.
    """
    J = bump(delta, 2)
    x, w = np.polynomial.legendre.leggauss(ns)
    s = (x + 1.0) / 2.0 * radius
    ws = w * radius / 2.0
    ct = np.cos(2.0 * np.pi * (np.arange(nt) + 0.5) / nt)
    k = np.empty((ns, ns))
    for i, r in enumerate(s):
        d2 = np.maximum(r * r + s[:, None] ** 2 - 2.0 * r * s[:, None] * ct, 0.0)
        k[i] = J(np.sqrt(d2)).sum(axis=1) * 2.0 * np.pi / nt
    a = np.sqrt(ws * s)
    return float(np.linalg.eigvalsh(a[:, None] * k * a[None, :])[-1])


def disk_dilation_derivative(delta, t=1e-3):
    """d lambda_1 / dt for the unit disk dilated to radius 1 + t, by central differences."""
    return -(radial_disk_mu1(delta, 1.0 + t) - radial_disk_mu1(delta, 1.0 - t)) / (2.0 * t)


# frozen outputs of the two functions above (ns=300, nt=2000)
DISK_LAMBDA1 = {0.3: 0.02868, 0.5: 0.07266, 0.75: 0.14475, 1.0: 0.22667}
DISK_DILATION = {0.3: -0.053519, 0.5: -0.128121, 0.75: -0.235373, 1.0: -0.336528}


def naive_matrix(J, nodes, weight):
    """K[i, j] = J(|x_i - x_j|) * weight by explicit double loop."""
    n = len(nodes)
    K = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            K[i, j] = J(math.dist(nodes[i], nodes[j])) * weight
    return K


def midpoint_mass(J, dim, half_width, n):
    """Midpoint rule for the integral of J over [-half_width, half_width]^dim."""
    h = 2.0 * half_width / n
    x = -half_width + (np.arange(n) + 0.5) * h
    if dim == 1:
        return float(np.sum(J(np.abs(x))) * h)
    X, Y = np.meshgrid(x, x, indexing="ij")
    return float(np.sum(J(np.hypot(X, Y))) * h * h)


def power_mu1(K, iters=20000, tol=1e-15):
    """Plain power iteration from a deterministic positive start."""
    u = np.linspace(1.0, 2.0, len(K))
    u /= np.linalg.norm(u)
    mu = 0.0
    for _ in range(iters):
        v = K @ u
        new = float(u @ v)
        u = v / np.linalg.norm(v)
        if abs(new - mu) < tol * abs(new):
            break
        mu = new
    return new
