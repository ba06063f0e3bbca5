"""Indexed triangle surfaces, STL/OBJ input, and primitive meshes.

Surfaces are triangle soups with per-face outward unit normals and areas;
degenerate faces are dropped at construction.  The STL reader sniffs binary
versus ASCII by the declared record count rather than the header text.
"""

import struct

import numpy as np


class TriangleSurface:
    """Triangle mesh with per-face unit normals and positive areas."""

    def __init__(self, vertices, faces):
        vertices = np.asarray(vertices, dtype=float).reshape(-1, 3)
        faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise ValueError("face indices out of range")
        cross = np.cross(
            vertices[faces[:, 1]] - vertices[faces[:, 0]],
            vertices[faces[:, 2]] - vertices[faces[:, 0]],
        ) if len(faces) else np.zeros((0, 3))
        double_area = np.linalg.norm(cross, axis=1)
        scale = float(np.abs(vertices).max(initial=1.0))
        keep = double_area > 1e-14 * scale * scale
        self.vertices = vertices
        self.faces = faces[keep]
        self.normals = cross[keep] / double_area[keep, None] if keep.any() else np.zeros((0, 3))
        self.areas = 0.5 * double_area[keep]

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def total_area(self):
        return float(self.areas.sum())

    def triangle(self, i):
        return self.vertices[self.faces[i]]

    def aabb(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def face_aabbs(self):
        tri = self.vertices[self.faces]
        return tri.min(axis=1), tri.max(axis=1)

    def content_hash(self):
        import hashlib

        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices).tobytes())
        h.update(np.ascontiguousarray(self.faces).tobytes())
        return h.hexdigest()


def _weld(raw_vertices):
    """Merge exactly-equal vertices of a triangle soup into an indexed mesh."""
    raw = np.asarray(raw_vertices, dtype=float).reshape(-1, 3)
    uniq, inverse = np.unique(raw.view([("", raw.dtype)] * 3), return_inverse=True)
    vertices = uniq.view(raw.dtype).reshape(-1, 3)
    faces = inverse.reshape(-1, 3)
    return vertices, faces


def load_stl(path):
    """Load a binary or ASCII STL file."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 15:
        raise ValueError(f"{path}: not an STL file (too short)")
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if len(data) == 84 + 50 * count:
            rec = np.frombuffer(data[84:], dtype=np.dtype([
                ("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")]))
            verts, faces = _weld(rec["v"].astype(float).reshape(-1, 3))
            return TriangleSurface(verts, faces)
    text = data.decode("ascii", errors="replace")
    if "facet" not in text:
        raise ValueError(f"{path}: does not look like an STL file")
    coords = []
    for line in text.splitlines():
        parts = line.split()
        if len(parts) == 4 and parts[0] == "vertex":
            coords.append([float(parts[1]), float(parts[2]), float(parts[3])])
    if len(coords) % 3 != 0 or not coords:
        raise ValueError(f"{path}: malformed ASCII STL")
    verts, faces = _weld(np.array(coords))
    return TriangleSurface(verts, faces)


def save_stl(path, surface):
    """Write a binary STL file."""
    with open(path, "wb") as f:
        f.write(b"\0" * 80)
        f.write(struct.pack("<I", surface.n_faces))
        for i in range(surface.n_faces):
            f.write(struct.pack("<3f", *surface.normals[i]))
            for v in surface.triangle(i):
                f.write(struct.pack("<3f", *v))
            f.write(struct.pack("<H", 0))


def load_obj(path):
    """Load a Wavefront OBJ file (polygon faces are fan-triangulated)."""
    verts, faces = [], []
    with open(path, "r", encoding="utf-8", errors="replace") as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v" and len(parts) >= 4:
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f" and len(parts) >= 4:
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not faces:
        raise ValueError(f"{path}: no faces found")
    return TriangleSurface(np.array(verts), np.array(faces))


def load_mesh(path):
    """Load a triangle surface, dispatching on the file extension."""
    p = str(path).lower()
    if p.endswith(".obj"):
        return load_obj(path)
    if p.endswith(".stl"):
        return load_stl(path)
    raise ValueError(f"unsupported mesh format: {path} (expected .stl or .obj)")


# ---------------------------------------------------------------------------
# Primitive meshes for tests and experiments.

def cube_mesh(center=(0.0, 0.0, 0.0), size=1.0):
    """Axis-aligned cube, 12 triangles with outward normals."""
    c = np.asarray(center, dtype=float)
    h = size / 2.0
    corners = np.array([[sx, sy, sz] for sx in (-h, h) for sy in (-h, h) for sz in (-h, h)])
    v = corners + c
    # each face as two triangles, wound outward
    quads = [
        (0, 1, 3, 2, (-1, 0, 0)), (4, 6, 7, 5, (1, 0, 0)),
        (0, 4, 5, 1, (0, -1, 0)), (2, 3, 7, 6, (0, 1, 0)),
        (0, 2, 6, 4, (0, 0, -1)), (1, 5, 7, 3, (0, 0, 1)),
    ]
    faces = []
    for a, b, cc, d, _n in quads:
        faces.append([a, b, cc])
        faces.append([a, cc, d])
    surf = TriangleSurface(v, np.array(faces))
    return surf


def icosphere(subdivisions=3, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Geodesic sphere from a subdivided icosahedron, outward normals."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = list(verts)
    cache = {}

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key in cache:
            return cache[key]
        m = verts[i] + verts[j]
        m /= np.linalg.norm(m)
        verts.append(m)
        cache[key] = len(verts) - 1
        return cache[key]

    for _ in range(subdivisions):
        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces

    v = np.array(verts) * radius + np.asarray(center, dtype=float)
    return TriangleSurface(v, np.array(faces))


def tube_y(radius=0.1, y0=-1.0, y1=1.0, segments=48, center=(0.0, 0.0, 0.0)):
    """Open lateral surface of a cylinder along the y axis, outward normals."""
    c = np.asarray(center, dtype=float)
    phis = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.column_stack([radius * np.cos(phis), np.zeros(segments), radius * np.sin(phis)])
    bottom = ring + [0.0, y0, 0.0] + c
    top = ring + [0.0, y1, 0.0] + c
    verts = np.vstack([bottom, top])
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        # wound so the +x facet at phi=0 faces +x
        faces.append([i, segments + i, j])
        faces.append([j, segments + i, segments + j])
    return TriangleSurface(verts, np.array(faces))
