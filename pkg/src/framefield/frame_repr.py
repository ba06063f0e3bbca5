"""Reference harmonics, embedding of 3D frames into coefficient space, and
recovery of the nearest frame from an arbitrary coefficient vector.

A frame is an unordered triple of mutually orthogonal axes, invariant under
the 24-element octahedral rotation group.  Embedding rotates the reference
harmonic by R_x(alpha) R_y(beta) R_z(gamma); recovery inverts that map by
seeded local optimization, since the embedding is only injective modulo the
octahedral symmetries (and modulo sign for degree 3).
"""

from dataclasses import dataclass

import numpy as np

from . import sh_rotation as shr
from .sh_rotation import harmonic_dim, rot_z_apply, rot_z_generator_apply


def _wrap_angle(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class FrameOrientation:
    """Extrinsic Euler angles, applied as R_x(alpha) . R_y(beta) . R_z(gamma)."""

    alpha: float
    beta: float
    gamma: float

    def canonical(self):
        return FrameOrientation(*(float(_wrap_angle(a)) for a in (self.alpha, self.beta, self.gamma)))

    def as_array(self):
        return np.array([self.alpha, self.beta, self.gamma], dtype=float)


_REFERENCE = {
    4: np.array([0.0, 0.0, 0.0, 0.0, np.sqrt(7.0 / 12.0), 0.0, 0.0, 0.0, np.sqrt(5.0 / 12.0)]),
    3: np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
}


def reference(degree):
    """The axis-aligned frame's coefficient vector (unit norm)."""
    if degree not in _REFERENCE:
        raise ValueError(f"unsupported harmonic degree {degree!r}: expected 3 or 4")
    return _REFERENCE[degree].copy()


# Constant conjugation factors of the embedding pipeline:
#   embed = Q^T Rz(alpha) Q . P Rz(beta) P^T . Rz(gamma) . reference
# with P the x quarter turn and Q the y quarter turn.
_P = {d: shr.rot_x_quarter(d) for d in (3, 4)}
_Q = {d: shr.rot_y(d, np.pi / 2) for d in (3, 4)}


def embed_frames(degree, angles):
    """Embed a batch of frames; angles is (N, 3) columns (alpha, beta, gamma)."""
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    h, _ = _embed_pipeline(degree, angles, want_jacobian=False)
    return h


def _embed_pipeline(degree, angles, want_jacobian=True):
    """Embedding plus (optionally) the Jacobian d(embed)/d(alpha,beta,gamma).

    Works on row vectors: applying a constant operator M to each coefficient
    vector is ``rows @ M.T``.  The z generator commutes with R_z, so each
    partial derivative is the same pipeline with the generator inserted once.
    """
    ref = reference(degree)
    p, q = _P[degree], _Q[degree]
    alpha, beta, gamma = angles[:, 0], angles[:, 1], angles[:, 2]
    n = angles.shape[0]
    dim = ref.size

    v1 = rot_z_apply(degree, gamma, np.broadcast_to(ref, (n, dim)))
    v2 = v1 @ p                      # P^T .
    v3 = rot_z_apply(degree, beta, v2)
    v4 = v3 @ p.T                    # P .
    v5 = v4 @ q.T                    # Q .
    v6 = rot_z_apply(degree, alpha, v5)
    h = v6 @ q                       # Q^T .

    if not want_jacobian:
        return h, None

    g1 = rot_z_apply(degree, gamma, np.broadcast_to(rot_z_generator_apply(degree, ref), (n, dim)))
    dg = rot_z_apply(degree, alpha, rot_z_apply(degree, beta, g1 @ p) @ p.T @ q.T) @ q

    db = rot_z_apply(degree, alpha, rot_z_generator_apply(degree, v3) @ p.T @ q.T) @ q

    da = rot_z_generator_apply(degree, v6) @ q

    jac = np.stack([da, db, dg], axis=2)
    return h, jac


def embed_frame(degree, frame):
    """Coefficient vector of a single frame (unit norm)."""
    if isinstance(frame, FrameOrientation):
        ang = frame.as_array()
    else:
        ang = np.asarray(frame, dtype=float).reshape(3)
    return embed_frames(degree, ang[None, :])[0]


def frame_axes(frame):
    """The three orthonormal axis directions, as columns of the 3x3 rotation."""
    if isinstance(frame, FrameOrientation):
        a, b, g = frame.alpha, frame.beta, frame.gamma
    else:
        a, b, g = frame
    return shr.rot3_x(a) @ shr.rot3_y(b) @ shr.rot3_z(g)


def octahedral_group():
    """The 24 rotation matrices of the octahedral group (signed permutations, det +1)."""
    mats = []
    for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
        for signs in np.ndindex(2, 2, 2):
            m = np.zeros((3, 3))
            for row, col in enumerate(perm):
                m[row, col] = 1.0 - 2.0 * signs[row]
            if np.linalg.det(m) > 0:
                mats.append(m)
    return mats


# ---------------------------------------------------------------------------
# Frame recovery: seeded, damped Gauss-Newton on the Euler angles.

_SEED_CACHE = {}


def _seed_grid(degree):
    """Euler-angle seed grid (~1000 frames) with precomputed embeddings."""
    if degree in _SEED_CACHE:
        return _SEED_CACHE[degree]
    na, nb, ng = 12, 7, 12
    alphas = np.linspace(-np.pi, np.pi, na, endpoint=False)
    betas = np.linspace(-np.pi / 2, np.pi / 2, nb)
    gammas = np.linspace(-np.pi, np.pi, ng, endpoint=False)
    grid = np.stack(np.meshgrid(alphas, betas, gammas, indexing="ij"), axis=-1).reshape(-1, 3)
    emb = embed_frames(degree, grid)
    _SEED_CACHE[degree] = (grid, emb)
    return grid, emb


def recover_frames(h, n_starts=8, max_iter=60, initial=None):
    """Recover the nearest frame for each row of h (batch API).

    Returns (angles, residuals): angles is (N, 3) canonical Euler angles and
    residuals the Euclidean distance between the (sign-resolved, degree 3)
    embedding and the normalized input.  Raises on near-zero rows.

    ``initial`` warm-starts the refinement with per-row angles (the solver
    passes the previous projection's result); grid seeding still contributes
    ``n_starts`` additional starts.
    """
    h = np.atleast_2d(np.asarray(h, dtype=float))
    degree = shr.degree_of(h)
    norms = np.linalg.norm(h, axis=1)
    if np.any(norms <= 1e-9):
        raise ValueError("cannot recover a frame from a near-zero coefficient vector")
    target = h / norms[:, None]
    n = target.shape[0]

    starts = []
    if initial is not None:
        ang0 = np.atleast_2d(np.asarray(initial, dtype=float))
        s0 = np.einsum("ni,ni->n", embed_frames(degree, ang0), target)
        sign0 = np.sign(s0 + (s0 == 0)) if degree == 3 else np.ones(n)
        starts.append((ang0, sign0))

    if n_starts > 0:
        seeds, seed_emb = _seed_grid(degree)
        scores = target @ seed_emb.T
        if degree == 3:
            signed = np.sign(scores + (scores == 0))
            scores = np.abs(scores)
        order = np.argsort(-scores, axis=1)[:, :n_starts]
        rows = np.arange(n)
        for s in range(order.shape[1]):
            idx = order[:, s]
            sign = signed[rows, idx] if degree == 3 else np.ones(n)
            starts.append((seeds[idx], sign))

    if not starts:
        raise ValueError("recover_frames needs n_starts > 0 or an initial guess")

    best_ang = np.zeros((n, 3))
    best_res = np.full(n, np.inf)
    for ang0, sign in starts:
        ang, res = _refine(degree, ang0, sign[:, None] * target, max_iter=max_iter)
        better = res < best_res
        best_res = np.where(better, res, best_res)
        best_ang = np.where(better[:, None], ang, best_ang)

    return _wrap_angle(best_ang), best_res


def _refine(degree, angles, target, max_iter=60):
    """Damped Gauss-Newton on ||embed(angles) - target||^2, batched."""
    angles = angles.copy()
    mu = np.full(angles.shape[0], 1e-3)
    h, jac = _embed_pipeline(degree, angles)
    r = h - target
    res = np.einsum("ni,ni->n", r, r)
    for _ in range(max_iter):
        g = np.einsum("nij,ni->nj", jac, r)
        hess = np.einsum("nij,nik->njk", jac, jac)
        hess = hess + mu[:, None, None] * np.eye(3)
        try:
            step = -np.linalg.solve(hess, g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            hess = hess + 1e-9 * np.eye(3)
            step = -np.linalg.solve(hess, g[..., None])[..., 0]
        trial = angles + step
        h_t, jac_t = _embed_pipeline(degree, trial)
        r_t = h_t - target
        res_t = np.einsum("ni,ni->n", r_t, r_t)
        accept = res_t <= res
        angles = np.where(accept[:, None], trial, angles)
        r = np.where(accept[:, None], r_t, r)
        jac = np.where(accept[:, None, None], jac_t, jac)
        moved = np.where(accept, res - res_t, 0.0)
        res = np.where(accept, res_t, res)
        mu = np.where(accept, np.maximum(mu / 3.0, 1e-12), np.minimum(mu * 4.0, 1e8))
        if np.all((moved < 1e-18) & (np.abs(step).max(axis=1) < 1e-10) | (res < 1e-26)):
            break
    return angles, np.sqrt(np.maximum(res, 0.0))


def recover_frame(h):
    """Recover (FrameOrientation, residual) from a single coefficient vector."""
    ang, res = recover_frames(np.asarray(h, dtype=float)[None, :])
    return FrameOrientation(*map(float, ang[0])).canonical(), float(res[0])
