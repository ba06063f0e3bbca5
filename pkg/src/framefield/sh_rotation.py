"""Exact rotation operators on degree-3 and degree-4 real spherical harmonic
coefficient spaces.

The degree-4 harmonics span a 9D space with basis Y4,-4 .. Y4,4 and the
degree-3 octupoles a 7D space with basis Y3,-3 .. Y3,3; coefficient index i
corresponds to order m = i - degree.  Rotation about z is block diagonal,
mixing the (+m, -m) pairs by cos/sin of m*angle.  The quarter turn about x
is a fixed matrix with radical entries; rotations about y and general
rotations about x are conjugation products of those two building blocks:

    R_y(beta)  = R_x(pi/2) R_z(beta) R_x(pi/2)^T
    R_x(alpha) = R_y(pi/2)^T R_z(alpha) R_y(pi/2)

The matching 3D rotations (rot3_*) use the sign conventions induced by the
same conjugation identities, so lifting a composed 3D rotation and composing
the lifted operators agree.
"""

import numpy as np

SUPPORTED_DEGREES = (3, 4)

_S2 = np.sqrt(2.0)
_S5 = np.sqrt(5.0)
_S6 = np.sqrt(6.0)
_S7 = np.sqrt(7.0)
_S10 = np.sqrt(10.0)
_S14 = np.sqrt(14.0)
_S15 = np.sqrt(15.0)
_S35 = np.sqrt(35.0)

# Quarter turn about x for degree 4, exact entries scaled by 1/8.
_RX_QUARTER_4 = np.array([
    [0.0,       0.0,     0.0,       0.0,    0.0,     2 * _S14, 0.0,      -2 * _S2,  0.0],
    [0.0,      -6.0,     0.0,       2 * _S7, 0.0,    0.0,      0.0,       0.0,      0.0],
    [0.0,       0.0,     0.0,       0.0,    0.0,     2 * _S2,  0.0,       2 * _S14, 0.0],
    [0.0,       2 * _S7, 0.0,       6.0,    0.0,     0.0,      0.0,       0.0,      0.0],
    [0.0,       0.0,     0.0,       0.0,    3.0,     0.0,      2 * _S5,   0.0,      _S35],
    [-2 * _S14, 0.0,    -2 * _S2,   0.0,    0.0,     0.0,      0.0,       0.0,      0.0],
    [0.0,       0.0,     0.0,       0.0,    2 * _S5, 0.0,      4.0,       0.0,     -2 * _S7],
    [2 * _S2,   0.0,    -2 * _S14,  0.0,    0.0,     0.0,      0.0,       0.0,      0.0],
    [0.0,       0.0,     0.0,       0.0,    _S35,    0.0,     -2 * _S7,   0.0,      1.0],
]) / 8.0

# Quarter turn about x for degree 3, exact entries scaled by 1/4.
_RX_QUARTER_3 = np.array([
    [0.0,   0.0,  0.0,   _S10, 0.0,  -_S6,  0.0],
    [0.0,  -4.0,  0.0,   0.0,  0.0,   0.0,  0.0],
    [0.0,   0.0,  0.0,   _S6,  0.0,   _S10, 0.0],
    [-_S10, 0.0, -_S6,   0.0,  0.0,   0.0,  0.0],
    [0.0,   0.0,  0.0,   0.0, -1.0,   0.0, -_S15],
    [_S6,   0.0, -_S10,  0.0,  0.0,   0.0,  0.0],
    [0.0,   0.0,  0.0,   0.0, -_S15,  0.0,  1.0],
]) / 4.0

_RX_QUARTER = {3: _RX_QUARTER_3, 4: _RX_QUARTER_4}


def _check_degree(degree):
    if degree not in SUPPORTED_DEGREES:
        raise ValueError(f"unsupported harmonic degree {degree!r}: expected 3 or 4")


def harmonic_dim(degree):
    """Dimension of the coefficient space (7 for degree 3, 9 for degree 4)."""
    _check_degree(degree)
    return 2 * degree + 1


def degree_of(coeffs):
    """Infer the harmonic degree from a coefficient vector's length."""
    n = np.shape(coeffs)[-1]
    if n == 7:
        return 3
    if n == 9:
        return 4
    raise ValueError(f"coefficient vector of length {n}: expected 7 or 9")


def rot_z(degree, gamma):
    """Rotation about z by ``gamma`` on the coefficient space.

    Block diagonal: the (m, -m) coefficient pair rotates by m*gamma, the
    m = 0 coefficient is fixed.
    """
    d = degree
    _check_degree(d)
    m = np.eye(2 * d + 1)
    for k in range(1, d + 1):
        i, j = d - k, d + k
        c, s = np.cos(k * gamma), np.sin(k * gamma)
        m[i, i] = c
        m[i, j] = s
        m[j, i] = -s
        m[j, j] = c
    return m


def rot_x_quarter(degree):
    """The exact quarter-turn-about-x operator (constant matrix)."""
    _check_degree(degree)
    return _RX_QUARTER[degree].copy()


def rot_y(degree, beta):
    """Rotation about y: conjugation of R_z(beta) by the x quarter turn."""
    _check_degree(degree)
    q = _RX_QUARTER[degree]
    return q @ rot_z(degree, beta) @ q.T


_ROT_Y_QUARTER = {d: _RX_QUARTER[d] @ rot_z(d, np.pi / 2) @ _RX_QUARTER[d].T for d in SUPPORTED_DEGREES}


def rot_x(degree, alpha):
    """Rotation about x: conjugation of R_z(alpha) by the y quarter turn."""
    _check_degree(degree)
    q = _ROT_Y_QUARTER[degree]
    return q.T @ rot_z(degree, alpha) @ q


def rot_z_to_n(degree, n):
    """Operator of a 3D rotation taking the +z axis onto the unit vector n.

    Composed from spherical angles of n; the residual freedom (a pre-rotation
    about z) does not affect the aligned-manifold span.  Near n = -z the
    half turn about x is used directly to avoid the atan2 seam.
    """
    _check_degree(degree)
    n = as_unit_vector(n)
    if n[2] < -1.0 + 1e-9:
        return rot_x(degree, np.pi)
    theta = np.arccos(np.clip(n[2], -1.0, 1.0))
    phi = np.arctan2(n[1], n[0])
    return rot_z(degree, phi) @ rot_y(degree, -theta)


def as_unit_vector(n, tol=1e-12):
    """Validate and return n as a float64 unit vector."""
    v = np.asarray(n, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError("direction vector has non-finite entries")
    if abs(v @ v - 1.0) > 3 * tol:
        raise ValueError(f"direction vector is not unit length: |n|^2 = {v @ v!r}")
    return v


# ---------------------------------------------------------------------------
# Batched block-rotation helpers (used by the frame embedding/recovery code).

def rot_z_apply(degree, gamma, vecs):
    """Apply R_z(gamma[i]) to vecs[i] without forming matrices.

    gamma: (N,) angles; vecs: (N, dim).  Returns (N, dim).
    """
    d = degree
    _check_degree(d)
    gamma = np.asarray(gamma, dtype=float)
    vecs = np.asarray(vecs, dtype=float)
    out = vecs.copy()
    for k in range(1, d + 1):
        i, j = d - k, d + k
        c, s = np.cos(k * gamma), np.sin(k * gamma)
        out[..., i] = c * vecs[..., i] + s * vecs[..., j]
        out[..., j] = -s * vecs[..., i] + c * vecs[..., j]
    return out


def rot_z_generator_apply(degree, vecs):
    """Apply the z generator dR_z/dgamma|_0 to each row of vecs."""
    d = degree
    _check_degree(d)
    vecs = np.asarray(vecs, dtype=float)
    out = np.zeros_like(vecs)
    for k in range(1, d + 1):
        i, j = d - k, d + k
        out[..., i] = k * vecs[..., j]
        out[..., j] = -k * vecs[..., i]
    return out


# ---------------------------------------------------------------------------
# 3D shadows of the lifted operators.
#
# rot3_x and rot3_z are the usual counterclockwise rotations.  rot3_y is
# defined by the same conjugation identity as the harmonic-space R_y, which
# places -sin above the diagonal; this is what makes lift(rot3_y(b)) equal
# rot_y(d, b) exactly.

def rot3_x(alpha):
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot3_y(beta):
    c, s = np.cos(beta), np.sin(beta)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def rot3_z(gamma):
    c, s = np.cos(gamma), np.sin(gamma)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot3_z_to_n(n):
    """3D rotation taking +z onto n, matching rot_z_to_n's composition."""
    n = as_unit_vector(n)
    if n[2] < -1.0 + 1e-9:
        return rot3_x(np.pi)
    theta = np.arccos(np.clip(n[2], -1.0, 1.0))
    phi = np.arctan2(n[1], n[0])
    return rot3_z(phi) @ rot3_y(-theta)


def euler_from_rot3(m):
    """Euler angles (alpha, beta, gamma) with m = rot3_x(a) rot3_y(b) rot3_z(g).

    beta is taken in [-pi/2, pi/2]; at the gimbal configuration
    (|m[0,2]| = 1) gamma is set to 0.
    """
    m = np.asarray(m, dtype=float)
    sb = np.clip(-m[0, 2], -1.0, 1.0)
    beta = np.arcsin(sb)
    if abs(sb) < 1.0 - 1e-12:
        alpha = np.arctan2(-m[1, 2], m[2, 2])
        gamma = np.arctan2(-m[0, 1], m[0, 0])
    else:
        # gimbal: rows 1..2 only constrain gamma -+ alpha; fix gamma = 0
        alpha = np.arctan2(-sb * m[1, 0], m[1, 1])
        gamma = 0.0
    return float(alpha), float(beta), float(gamma)
