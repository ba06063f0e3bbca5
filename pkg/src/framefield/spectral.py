"""Spectral diagnostics for accumulated penalties: eigendecomposition,
null-space extraction, and the analytic cube/cylinder/sphere averages.

The cylinder and sphere averages integrate the unit-weight constraint matrix
over the relevant normal families.  The cylinder integral is evaluated in
closed form (the integrand entries are trigonometric polynomials, so only
constant terms survive the averaging); a Gauss-Legendre path is kept as an
independent cross-check.
"""

from dataclasses import dataclass

import numpy as np

from . import penalty as pen
from . import sh_rotation as shr
from .eigen import eigh_jacobi


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    null_space_dim: int
    tolerance: float

    def to_dict(self):
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "eigenvectors": self.eigenvectors.tolist(),
            "null_space_dim": self.null_space_dim,
            "tolerance": self.tolerance,
        }


def eigen_sym(a, tol=None):
    """Full spectrum and orthonormal eigenbasis of a symmetric matrix.

    null_space_dim counts eigenvalues below tol (default 1e-9 scaled by the
    spectral norm).  Asymmetric input is rejected.
    """
    a = np.asarray(a, dtype=float)
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("eigen_sym expects a square matrix")
    if np.abs(a - a.T).max() > 1e-10 * scale:
        raise ValueError("eigen_sym expects a symmetric matrix")
    w, v = eigh_jacobi(a)
    if tol is None:
        tol = 1e-9 * max(1.0, float(np.abs(w).max(initial=0.0)))
    return SpectralReport(w, v, int(np.sum(w < tol)), float(tol))


def null_space(a, tol=None):
    """Orthonormal basis (columns) of the near-kernel of a symmetric matrix."""
    rep = eigen_sym(a, tol=tol)
    return rep.eigenvectors[:, rep.eigenvalues < rep.tolerance]


def principal_angles(u, v):
    """Principal angles (ascending, radians) between the column spans of u, v."""
    qu, _ = np.linalg.qr(np.atleast_2d(u))
    qv, _ = np.linalg.qr(np.atleast_2d(v))
    sv = np.linalg.svd(qu.T @ qv, compute_uv=False)
    return np.arccos(np.clip(sv, -1.0, 1.0))[::-1]


def _axis_conjugation(degree, axis):
    """Lifted rotation taking the y axis onto the requested cylinder axis."""
    axis = shr.as_unit_vector(axis)
    y = np.array([0.0, 1.0, 0.0])
    if np.allclose(axis, y, atol=1e-14):
        return np.eye(2 * degree + 1)
    return shr.rot_z_to_n(degree, axis) @ shr.rot_z_to_n(degree, y).T


def _averaged_outer_z_blocks(degree, u):
    """Closed-form average over beta of (R_z(beta) u)(R_z(beta) u)^T.

    Component i of R_z(beta) u oscillates at the single frequency
    k_i = |i - degree|; products of distinct frequencies average to zero
    and matching ones contribute (c_a c_b + s_a s_b) / 2.
    """
    d = degree
    dim = 2 * d + 1
    cos_c = np.zeros(dim)
    sin_c = np.zeros(dim)
    cos_c[d] = u[d]
    for k in range(1, d + 1):
        i, j = d - k, d + k
        cos_c[i], sin_c[i] = u[i], u[j]
        cos_c[j], sin_c[j] = u[j], -u[i]
    freq = np.abs(np.arange(dim) - d)
    m = np.where(np.equal.outer(freq, freq),
                 0.5 * (np.outer(cos_c, cos_c) + np.outer(sin_c, sin_c)), 0.0)
    m[d, d] = u[d] * u[d]
    return m


def cylinder_average(axis=(0.0, 1.0, 0.0), degree=3, method="analytic", nodes=64):
    """Average of the unit-weight constraint matrix over the normals of a
    cylinder with the given axis.

    Only derived for the octupole (degree 3) representation.  ``method`` is
    "analytic" (exact term-by-term integration, the normative path) or
    "quadrature" (composite Gauss-Legendre over the sweep angle).
    """
    if degree != 3:
        raise ValueError("cylinder averaging is derived for degree 3 only")
    conj = _axis_conjugation(degree, axis)
    dim = 2 * degree + 1

    if method == "analytic":
        q = shr.rot_x_quarter(degree)
        p_z, q_z, _ = pen.manifold_vectors(degree)
        a = np.eye(dim)
        for vec in (p_z, q_z):
            m = _averaged_outer_z_blocks(degree, q.T @ vec)
            a -= q @ m @ q.T
    elif method == "quadrature":
        x, w = np.polynomial.legendre.leggauss(nodes)
        betas = np.pi * (x + 1.0)
        p_z, q_z, _ = pen.manifold_vectors(degree)
        a = np.eye(dim)
        acc = np.zeros((dim, dim))
        for beta, wt in zip(betas, w):
            ry = shr.rot_y(degree, beta)
            p_n, q_n = ry @ p_z, ry @ q_z
            acc += wt * (np.outer(p_n, p_n) + np.outer(q_n, q_n))
        a -= acc / 2.0
    else:
        raise ValueError(f"unknown method {method!r}")

    a = conj @ a @ conj.T
    a = 0.5 * (a + a.T)
    return pen.BoundaryPenalty(degree, a, np.zeros(0), 0.0, 1.0)


def sphere_average(degree=3, n_polar=32, n_azimuth=64):
    """Average of the unit-weight constraint matrix over the unit sphere.

    Gauss-Legendre in cos(theta) crossed with a uniform azimuth grid; the
    integrand is a low-degree polynomial in the normal, so this is exact to
    roundoff at the default resolution.  Degree 3 only.
    """
    if degree != 3:
        raise ValueError("sphere averaging is derived for degree 3 only")
    dim = 2 * degree + 1
    zs, wz = np.polynomial.legendre.leggauss(n_polar)
    phis = 2.0 * np.pi * np.arange(n_azimuth) / n_azimuth
    acc = np.zeros((dim, dim))
    p_z, q_z, _ = pen.manifold_vectors(degree)
    for z, wt in zip(zs, wz):
        st = np.sqrt(max(0.0, 1.0 - z * z))
        for phi in phis:
            n = np.array([st * np.cos(phi), st * np.sin(phi), z])
            rot = shr.rot_z_to_n(degree, n)
            p_n, q_n = rot @ p_z, rot @ q_z
            acc += wt * (np.eye(dim) - np.outer(p_n, p_n) - np.outer(q_n, q_n))
    a = acc / (2.0 * n_azimuth)
    a = 0.5 * (a + a.T)
    return pen.BoundaryPenalty(degree, a, np.zeros(0), 0.0, 1.0)
