"""Quadratic boundary-alignment penalties on the harmonic coefficient spaces.

A single orientation constraint with unit normal n penalizes the squared
distance of a coefficient vector from the 1D manifold of frames having n as
an axis.  For degree 4 the penalty is affine (matrix, linear term, constant);
for degree 3 it is homogeneous, which is what makes the compact 28-float
storage and the spectral shift possible.  Multiple constraints combine by
plain coefficient summation.
"""

from dataclasses import dataclass, field

import numpy as np

from . import sh_rotation as shr
from .eigen import eigh_jacobi

# Manifold basis at the z axis.  Degree 4: h = b_z + a*p_z + b*q_z with
# a^2 + b^2 = 5/12; degree 3: h = a*p_z + b*q_z with a^2 + b^2 = 1.
_P_Z = {
    4: np.array([1.0, 0, 0, 0, 0, 0, 0, 0, 0]),
    3: np.array([0.0, 1, 0, 0, 0, 0, 0]),
}
_Q_Z = {
    4: np.array([0.0, 0, 0, 0, 0, 0, 0, 0, 1]),
    3: np.array([0.0, 0, 0, 0, 0, 1, 0]),
}
_B_Z = {
    4: np.array([0.0, 0, 0, 0, np.sqrt(7.0 / 12.0), 0, 0, 0, 0]),
    3: np.zeros(7),
}

FREE_TERM_DEGREE4 = 7.0 / 12.0


@dataclass
class BoundaryPenalty:
    """Quadratic penalty  h^T A h - 2 b^T h + c  (b, c zero for degree 3)."""

    degree: int
    matrix: np.ndarray
    linear: np.ndarray
    constant: float
    total_weight: float

    def copy(self):
        return BoundaryPenalty(self.degree, self.matrix.copy(), self.linear.copy(),
                               self.constant, self.total_weight)


@dataclass
class PackedPenalty:
    """Upper-triangular packing of a BoundaryPenalty.

    28 matrix coefficients for degree 3; 45 matrix coefficients plus the 9D
    linear term and the constant for degree 4.  Round-trips bit-exactly.
    """

    degree: int
    upper: np.ndarray
    linear: np.ndarray
    constant: float
    total_weight: float

    def payload(self):
        """Flat array of the stored reals (excluding the weight)."""
        if self.degree == 3:
            return self.upper.copy()
        return np.concatenate([self.upper, self.linear, [self.constant]])

    def to_dict(self):
        d = {"degree": self.degree, "packed": self.upper.tolist(),
             "total_weight": self.total_weight}
        if self.degree == 4:
            d["b"] = self.linear.tolist()
            d["c"] = self.constant
        return d

    @classmethod
    def from_dict(cls, d):
        degree = int(d["degree"])
        upper = np.asarray(d["packed"], dtype=float)
        expected = 28 if degree == 3 else 45
        if upper.size != expected:
            raise ValueError(f"packed penalty of degree {degree} needs {expected} "
                             f"matrix coefficients, got {upper.size}")
        if degree == 3:
            return cls(3, upper, np.zeros(0), 0.0, float(d["total_weight"]))
        return cls(4, upper, np.asarray(d["b"], dtype=float), float(d["c"]),
                   float(d["total_weight"]))


def manifold_vectors(degree, n=None):
    """(p, q, b) spanning the aligned manifold for normal n (default +z)."""
    if degree not in _P_Z:
        raise ValueError(f"unsupported harmonic degree {degree!r}: expected 3 or 4")
    if n is None:
        return _P_Z[degree].copy(), _Q_Z[degree].copy(), _B_Z[degree].copy()
    rot = shr.rot_z_to_n(degree, n)
    return rot @ _P_Z[degree], rot @ _Q_Z[degree], rot @ _B_Z[degree]


def manifold_vectors_batch(degree, normals):
    """(P, Q, B) rows of the aligned-manifold vectors for many unit normals.

    Same construction as manifold_vectors, vectorized through the block
    structure of R_z; the antipodal seam rows fall back to the half turn.
    """
    if degree not in _P_Z:
        raise ValueError(f"unsupported harmonic degree {degree!r}: expected 3 or 4")
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    theta = np.arccos(np.clip(normals[:, 2], -1.0, 1.0))
    phi = np.arctan2(normals[:, 1], normals[:, 0])
    p_quarter = shr.rot_x_quarter(degree)
    n = normals.shape[0]

    outs = []
    for vec in (_P_Z[degree], _Q_Z[degree], _B_Z[degree]):
        u0 = vec @ p_quarter                       # P^T vec, row form
        u1 = shr.rot_z_apply(degree, -theta, np.broadcast_to(u0, (n, u0.size)))
        u2 = u1 @ p_quarter.T                      # P .
        outs.append(shr.rot_z_apply(degree, phi, u2))

    seam = normals[:, 2] < -1.0 + 1e-9
    if np.any(seam):
        half = shr.rot_x(degree, np.pi)
        for out, vec in zip(outs, (_P_Z[degree], _Q_Z[degree], _B_Z[degree])):
            out[seam] = half @ vec
    return outs


def accumulate_constraints(degree, normals, weights):
    """Accumulated penalty of many single constraints, in one pass.

    Equivalent to ``accumulate([single_constraint(degree, n, w) ...])`` but
    vectorized over the constraint list.
    """
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    weights = np.asarray(weights, dtype=float)
    if normals.shape[0] == 0:
        raise ValueError("cannot accumulate an empty constraint set")
    if np.any(weights <= 0):
        raise ValueError("constraint weights must be positive")
    p, q, b = manifold_vectors_batch(degree, normals)
    dim = 2 * degree + 1
    total = float(weights.sum())
    a = total * np.eye(dim)
    a -= np.einsum("n,ni,nj->ij", weights, p, p)
    a -= np.einsum("n,ni,nj->ij", weights, q, q)
    a = 0.5 * (a + a.T)
    if degree == 4:
        return BoundaryPenalty(4, a, np.einsum("n,ni->i", weights, b),
                               total * FREE_TERM_DEGREE4, total)
    return BoundaryPenalty(3, a, np.zeros(0), 0.0, total)


def single_constraint(degree, n, weight=1.0):
    """Penalty enforcing alignment of one frame axis with the unit normal n."""
    if degree not in _P_Z:
        raise ValueError(f"unsupported harmonic degree {degree!r}: expected 3 or 4")
    if not (weight > 0.0):
        raise ValueError(f"constraint weight must be positive, got {weight!r}")
    p, q, b = manifold_vectors(degree, n)
    dim = p.size
    a = weight * (np.eye(dim) - np.outer(p, p) - np.outer(q, q))
    if degree == 4:
        return BoundaryPenalty(4, a, weight * b, weight * FREE_TERM_DEGREE4, weight)
    return BoundaryPenalty(3, a, np.zeros(0), 0.0, weight)


def evaluate(pen, h):
    """Penalty value at the coefficient vector h (nonnegative up to roundoff)."""
    h = np.asarray(h, dtype=float)
    if h.shape[-1] != pen.matrix.shape[0]:
        raise ValueError(f"coefficient vector of length {h.shape[-1]} does not match "
                         f"degree-{pen.degree} penalty")
    val = h @ pen.matrix @ h
    if pen.degree == 4:
        val = val - 2.0 * (pen.linear @ h) + pen.constant
    return float(val)


def accumulate(pens):
    """Sum a nonempty list of same-degree penalties coefficientwise."""
    pens = list(pens)
    if not pens:
        raise ValueError("cannot accumulate an empty penalty list")
    degree = pens[0].degree
    if any(p.degree != degree for p in pens):
        raise ValueError("cannot accumulate penalties of mixed degrees")
    out = pens[0].copy()
    for p in pens[1:]:
        out.matrix += p.matrix
        if degree == 4:
            out.linear += p.linear
        out.constant += p.constant
        out.total_weight += p.total_weight
    return out


def spectral_shift(pen, tol=1e-12):
    """Subtract the smallest eigenvalue from a degree-3 penalty matrix.

    Makes the kernel (the unpenalized frame set) nonempty.  Already-singular
    forms pass through unchanged.  The affine degree-4 penalty has no
    principled shift and is rejected.
    """
    if pen.degree != 3:
        raise ValueError("spectral shift is defined for the homogeneous degree-3 "
                         "penalty only")
    w, _ = eigh_jacobi(pen.matrix)
    lam = w[0]
    out = pen.copy()
    if lam > tol:
        out.matrix = out.matrix - lam * np.eye(out.matrix.shape[0])
    return out


def pack(pen):
    """Pack the symmetric matrix into its upper triangle (row-major)."""
    dim = pen.matrix.shape[0]
    iu = np.triu_indices(dim)
    return PackedPenalty(pen.degree, pen.matrix[iu].copy(),
                         pen.linear.copy(), pen.constant, pen.total_weight)


def unpack(packed):
    """Inverse of pack, bit-exact."""
    dim = 7 if packed.degree == 3 else 9
    expected = dim * (dim + 1) // 2
    if packed.upper.size != expected:
        raise ValueError(f"packed degree-{packed.degree} penalty needs {expected} "
                         f"matrix coefficients, got {packed.upper.size}")
    a = np.zeros((dim, dim))
    iu = np.triu_indices(dim)
    a[iu] = packed.upper
    a.T[iu] = packed.upper
    return BoundaryPenalty(packed.degree, a, packed.linear.copy(),
                           packed.constant, packed.total_weight)
