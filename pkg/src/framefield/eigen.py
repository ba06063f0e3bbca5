"""Cyclic Jacobi eigendecomposition for small dense symmetric matrices.

The coefficient-space penalty matrices are 7x7 or 9x9; Jacobi sweeps give
high relative accuracy and exactly orthogonal eigenvectors at these sizes
without pulling in a LAPACK dependency.
"""

import numpy as np


def eigh_jacobi(a, tol=1e-14, max_sweeps=60):
    """Eigenvalues (ascending) and orthonormal eigenvector columns of a
    symmetric matrix, by cyclic Jacobi rotations.

    Converges when the off-diagonal Frobenius mass drops below
    tol * max(1, ||A||_F).
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(1.0, np.linalg.norm(a))
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2) * 2.0)
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c

                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq

                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]
