"""Geometric predicates for the immersed grid: axis-plane polygon clipping
with exact-area bookkeeping, and inside/outside classification of points
against a closed triangle surface.
"""

import numpy as np


def polygon_area(poly):
    """Area of a planar polygon in 3D (Newell's method)."""
    if poly is None or len(poly) < 3:
        return 0.0
    v = np.asarray(poly, dtype=float)
    s = np.cross(v, np.roll(v, -1, axis=0)).sum(axis=0)
    return 0.5 * float(np.linalg.norm(s))


def clip_polygon_axis(poly, axis, value, keep_below):
    """Sutherland-Hodgman clip against the plane coord[axis] = value."""
    out = []
    n = len(poly)
    for i in range(n):
        a = poly[i]
        b = poly[(i + 1) % n]
        da = a[axis] - value
        db = b[axis] - value
        ina = da <= 0.0 if keep_below else da >= 0.0
        inb = db <= 0.0 if keep_below else db >= 0.0
        if ina:
            out.append(a)
        if ina != inb:
            t = da / (da - db)
            out.append(a + t * (b - a))
    return out


def split_polygon_axis(poly, axis, value, eps=0.0):
    """Split a polygon by an axis plane into (below, above) parts.

    A polygon lying entirely in the plane is assigned to the below side only,
    so splitting never double-counts area across the shared face.
    """
    coords = [p[axis] for p in poly]
    if all(abs(c - value) <= eps for c in coords):
        return list(poly), []
    below = clip_polygon_axis(poly, axis, value, keep_below=True)
    above = clip_polygon_axis(poly, axis, value, keep_below=False)
    return below, above


def clip_polygon_box(poly, lo, hi):
    """Clip a polygon to an axis-aligned box; returns the (possibly empty) part."""
    out = list(poly)
    for axis in range(3):
        if not out:
            return out
        out = clip_polygon_axis(out, axis, lo[axis], keep_below=False)
        if not out:
            return out
        out = clip_polygon_axis(out, axis, hi[axis], keep_below=True)
    return out


def winding_numbers(points, surface):
    """Generalized winding number of each point with respect to the surface.

    Van Oosterom-Strackee solid angles summed over triangles; +-1 well inside
    a consistently oriented closed surface, ~0 outside.
    """
    tri = surface.vertices[surface.faces]
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(len(points))
    for idx, p in enumerate(points):
        a = tri[:, 0] - p
        b = tri[:, 1] - p
        c = tri[:, 2] - p
        la = np.linalg.norm(a, axis=1)
        lb = np.linalg.norm(b, axis=1)
        lc = np.linalg.norm(c, axis=1)
        det = np.einsum("ij,ij->i", a, np.cross(b, c))
        denom = (la * lb * lc + np.einsum("ij,ij->i", a, b) * lc
                 + np.einsum("ij,ij->i", b, c) * la
                 + np.einsum("ij,ij->i", c, a) * lb)
        out[idx] = np.sum(2.0 * np.arctan2(det, denom)) / (4.0 * np.pi)
    return out


def _ray_parity(point, surface, direction):
    """Crossing parity of a ray (Moller-Trumbore); None on a degenerate hit."""
    eps = 1e-12
    orig = np.asarray(point, dtype=float)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    tri = surface.vertices[surface.faces]
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    pvec = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > eps
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = orig - tri[:, 0]
    u = np.einsum("ij,ij->i", tvec, pvec) * inv
    qvec = np.cross(tvec, e1)
    v = np.einsum("j,ij->i", d, qvec) * inv
    t = np.einsum("ij,ij->i", e2, qvec) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > eps)
    margin = 1e-9
    risky = hit & ((u < margin) | (v < margin) | (u + v > 1 - margin))
    if np.any(risky):
        return None
    return int(np.count_nonzero(hit)) % 2


def points_inside(points, surface):
    """Boolean inside/outside classification of points for a closed surface.

    Winding number decides; ambiguous values fall back to ray-crossing parity
    with deterministically jittered directions.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    w = winding_numbers(points, surface)
    inside = np.abs(w) > 0.5
    ambiguous = np.abs(np.abs(w) - 0.5) < 0.2
    for idx in np.nonzero(ambiguous)[0]:
        parity = None
        rng = np.random.default_rng(12345 + idx)
        while parity is None:
            parity = _ray_parity(points[idx], surface, rng.normal(size=3))
        inside[idx] = bool(parity)
    return inside
