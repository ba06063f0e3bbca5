"""Hierarchical octree grid over an immersed triangle surface.

The octree refines cells that carry surface area down to ``max_level`` and
keeps surface-free cells at the coarsest level that avoids the surface, with
a grading pass limiting face-neighbor level jumps to one.  Each boundary
cell accumulates its clipped triangle fragments into a single packed
quadratic penalty, so a coarse cell summarizes arbitrarily many orientation
constraints; coarse-to-fine solving views the tree truncated at each level.

A versioned binary cache (magic ``SBCF``) persists the grid and penalties.
"""

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from . import penalty as pen

_CLASS_NAMES = ("boundary", "interior", "exterior")


@dataclass
class ImmersedCell:
    index: int
    level: int
    ijk: tuple
    lo: np.ndarray
    size: float
    parent: int = -1
    children: list | None = None
    is_boundary: bool = False
    classification: str = "interior"
    tri_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    frag_area: np.ndarray = field(default_factory=lambda: np.zeros(0))
    penalty: "pen.PackedPenalty | None" = None

    @property
    def hi(self):
        return self.lo + self.size

    @property
    def center(self):
        return self.lo + 0.5 * self.size

    @property
    def aabb(self):
        return self.lo.copy(), self.hi

    @property
    def is_leaf(self):
        return self.children is None

    @property
    def surface_area(self):
        return float(self.frag_area.sum())


class GridHierarchy:
    """Octree over an immersed surface, with per-level truncated views."""

    def __init__(self, surface, max_level, padding=0.05):
        if surface.n_faces == 0:
            raise ValueError("cannot build a grid over an empty surface")
        if not (1 <= max_level <= 12):
            raise ValueError(f"max_level must be in [1, 12], got {max_level}")
        self.surface = surface
        self.max_level = int(max_level)
        self.padding = float(padding)
        lo, hi = surface.aabb()
        extent = float((hi - lo).max())
        if extent <= 0:
            raise ValueError("surface has zero extent")
        self.root_size = extent * (1.0 + padding)
        self.root_lo = 0.5 * (lo + hi) - 0.5 * self.root_size

        self.nodes: list[ImmersedCell] = []
        self._key = {}
        self._build()
        self._grade()
        self._classify()
        self._views = [self._make_view(lv) for lv in range(self.max_level + 1)]
        self._adjacency = {}
        self.penalty_degree = None
        self.penalty_shift = None

    # -- construction ------------------------------------------------------

    def _new_node(self, level, ijk, parent):
        size = self.root_size / (1 << level)
        lo = self.root_lo + np.asarray(ijk, dtype=float) * size
        node = ImmersedCell(index=len(self.nodes), level=level, ijk=tuple(ijk),
                            lo=lo, size=size, parent=parent)
        self.nodes.append(node)
        self._key[(level,) + tuple(ijk)] = node.index
        return node

    def _build(self):
        surf = self.surface
        root = self._new_node(0, (0, 0, 0), -1)
        frags = [(t, [v for v in surf.triangle(t)]) for t in range(surf.n_faces)]
        stack = [(root.index, frags)]
        while stack:
            idx, frags = stack.pop()
            node = self.nodes[idx]
            eps_area = 1e-12 * node.size * node.size
            kept = [(t, poly) for t, poly in frags if geo.polygon_area(poly) > eps_area]
            node.tri_idx = np.array([t for t, _ in kept], dtype=np.int64)
            node.frag_area = np.array([geo.polygon_area(p) for _, p in kept])
            node.is_boundary = bool(kept)
            node.classification = "boundary" if kept else "interior"
            if node.is_boundary and node.level < self.max_level:
                child_frags = self._split_fragments(node, kept)
                node.children = []
                for ci, (dijk, cf) in enumerate(child_frags):
                    child = self._new_node(node.level + 1,
                                           tuple(2 * np.array(node.ijk) + dijk),
                                           node.index)
                    node.children.append(child.index)
                    stack.append((child.index, cf))

    def _split_fragments(self, node, frags):
        """Partition fragments across the 8 children (exact area split).

        Children are ordered z-major: position 4*zbit + 2*ybit + xbit,
        matching _locate and _facing_members.
        """
        mid = node.lo + 0.5 * node.size
        eps = 1e-14 * node.size
        buckets = {(): frags}
        for axis in range(3):
            nxt = {}
            for key, fl in buckets.items():
                below, above = [], []
                for t, poly in fl:
                    b, a = geo.split_polygon_axis(poly, axis, mid[axis], eps=eps)
                    if len(b) >= 3:
                        below.append((t, b))
                    if len(a) >= 3:
                        above.append((t, a))
                nxt[key + (0,)] = below
                nxt[key + (1,)] = above
            buckets = nxt
        out = []
        for p in range(8):
            bits = (p & 1, (p >> 1) & 1, (p >> 2) & 1)
            out.append((np.array(bits), buckets[bits]))
        return out

    def _subdivide_uniform(self, node):
        """Split a surface-free node; children inherit its classification."""
        node.children = []
        for dz in (0, 1):
            for dy in (0, 1):
                for dx in (0, 1):
                    child = self._new_node(node.level + 1,
                                           (2 * node.ijk[0] + dx,
                                            2 * node.ijk[1] + dy,
                                            2 * node.ijk[2] + dz),
                                           node.index)
                    child.classification = node.classification
                    node.children.append(child.index)

    def _grade(self):
        """Limit leaf face-neighbor level jumps to one."""
        work = [n.index for n in self.nodes if n.is_leaf]
        while work:
            idx = work.pop()
            node = self.nodes[idx]
            if not node.is_leaf:
                continue
            if node.level < 2:
                continue
            span = 1 << node.level
            for axis in range(3):
                for step in (-1, 1):
                    ijk = list(node.ijk)
                    ijk[axis] += step
                    if not (0 <= ijk[axis] < span):
                        continue
                    nb = self._locate(node.level, ijk)
                    if nb.is_leaf and nb.level < node.level - 1:
                        self._subdivide_uniform(nb)
                        work.extend(nb.children)
                        work.append(idx)

    def _locate(self, level, ijk):
        """Deepest existing node at or above (level, ijk)."""
        node = self.nodes[0]
        for lv in range(1, level + 1):
            if node.children is None:
                break
            shift = level - lv
            dx = (ijk[0] >> shift) & 1
            dy = (ijk[1] >> shift) & 1
            dz = (ijk[2] >> shift) & 1
            node = self.nodes[node.children[dz * 4 + dy * 2 + dx]]
        return node

    def _classify(self):
        """Inside/outside classification of surface-free subtree roots."""
        roots = [n for n in self.nodes
                 if not n.is_boundary and (n.parent < 0 or self.nodes[n.parent].is_boundary)]
        if not roots:
            return
        centers = np.array([n.center for n in roots])
        inside = geo.points_inside(centers, self.surface)
        for node, flag in zip(roots, inside):
            cls = "interior" if flag else "exterior"
            stack = [node.index]
            while stack:
                i = stack.pop()
                self.nodes[i].classification = cls
                if self.nodes[i].children:
                    stack.extend(self.nodes[i].children)

    # -- views and adjacency -------------------------------------------------

    def _make_view(self, level):
        out = []
        stack = [0]
        while stack:
            idx = stack.pop()
            node = self.nodes[idx]
            if node.is_leaf or node.level == level:
                out.append(idx)
            else:
                stack.extend(reversed(node.children))
        out.sort(key=lambda i: (self.nodes[i].level,) + self.nodes[i].ijk)
        return out

    def view(self, level):
        """Node indices forming the partition of the root box at this level."""
        if not (0 <= level <= self.max_level):
            raise ValueError(f"level {level} outside [0, {self.max_level}]")
        return list(self._views[level])

    def cells(self, level):
        return [self.nodes[i] for i in self.view(level)]

    def _view_members(self, level):
        return set(self._views[level])

    def adjacency(self, level):
        """Face-neighbor pairs (positions into view(level)) and weights.

        The weight of an edge is shared-face area / center distance, the
        standard finite-volume Dirichlet coefficient on graded octrees.
        """
        if level in self._adjacency:
            return self._adjacency[level]
        view = self._views[level]
        members = self._view_members(level)
        pos = {idx: k for k, idx in enumerate(view)}
        pairs = set()
        for idx in view:
            node = self.nodes[idx]
            span = 1 << node.level
            for axis in range(3):
                for step in (-1, 1):
                    ijk = list(node.ijk)
                    ijk[axis] += step
                    if not (0 <= ijk[axis] < span):
                        continue
                    nb = self._locate(node.level, ijk)
                    for nb_idx in self._facing_members(nb, members, level, axis, -step):
                        a, b = pos[idx], pos[nb_idx]
                        if a != b:
                            pairs.add((min(a, b), max(a, b)))
        pairs = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
        weights = np.empty(len(pairs))
        for e, (a, b) in enumerate(pairs):
            na, nb = self.nodes[view[a]], self.nodes[view[b]]
            face = min(na.size, nb.size) ** 2
            dist = float(np.linalg.norm(na.center - nb.center))
            weights[e] = face / dist
        self._adjacency[level] = (pairs, weights)
        return pairs, weights

    def _facing_members(self, node, members, level, axis, side):
        """View members inside ``node`` on the face pointing along axis/side."""
        if node.index in members:
            return [node.index]
        if node.children is None or node.level >= level:
            return []
        out = []
        want = 0 if side < 0 else 1
        for ci, child_idx in enumerate(node.children):
            bits = (ci & 1, (ci >> 1) & 1, (ci >> 2) & 1)
            if bits[axis] == want:
                out.extend(self._facing_members(self.nodes[child_idx], members, level, axis, side))
        return out

    # -- penalties -----------------------------------------------------------

    def accumulate_penalties(self, degree, shift=True):
        """Attach packed penalties to every boundary node for this degree.

        ``shift`` applies the degree-3 spectral shift per cell (ignored for
        degree 4, which has no principled shift).
        """
        for node in self.nodes:
            if node.is_boundary:
                node.penalty = _penalty_from_fragments(
                    self.surface, node.tri_idx, node.frag_area, degree,
                    shift=shift and degree == 3)
            else:
                node.penalty = None
        self.penalty_degree = degree
        self.penalty_shift = bool(shift and degree == 3)

    def cell_mean_normal(self, node):
        """Area-weighted mean surface normal of a boundary cell."""
        if not node.is_boundary:
            raise ValueError("cell does not intersect the surface")
        n = np.einsum("f,fi->i", node.frag_area, self.surface.normals[node.tri_idx])
        norm = np.linalg.norm(n)
        return n / norm if norm > 0 else n

    # -- transfer operators ----------------------------------------------------

    def prolong(self, level, values):
        """Child initial values at level+1 from parent values at level."""
        values = np.asarray(values)
        src = {idx: k for k, idx in enumerate(self._views[level])}
        out = np.empty((len(self._views[level + 1]),) + values.shape[1:], dtype=values.dtype)
        for k, idx in enumerate(self._views[level + 1]):
            node = self.nodes[idx]
            out[k] = values[src[idx]] if idx in src else values[src[node.parent]]
        return out

    def restrict(self, level, values):
        """Parent values at level-1 by averaging children at level."""
        values = np.asarray(values)
        src = {idx: k for k, idx in enumerate(self._views[level])}
        out = np.empty((len(self._views[level - 1]),) + values.shape[1:], dtype=values.dtype)
        for k, idx in enumerate(self._views[level - 1]):
            if idx in src:
                out[k] = values[src[idx]]
            else:
                kids = self.nodes[idx].children
                out[k] = np.mean([values[src[c]] for c in kids], axis=0)
        return out

    # -- digests ---------------------------------------------------------------

    def config_digest(self):
        h = hashlib.sha256()
        h.update(self.surface.content_hash().encode())
        h.update(struct.pack("<id", self.max_level, self.padding))
        return h.hexdigest()


def build_grid(surface, max_level, padding=0.05):
    """Octree grid over the surface, refined to max_level along the boundary."""
    return GridHierarchy(surface, max_level, padding)


def _penalty_from_fragments(surface, tri_idx, areas, degree, shift):
    normals = surface.normals[tri_idx]
    acc = pen.accumulate_constraints(degree, normals, areas)
    if shift:
        acc = pen.spectral_shift(acc)
    return pen.pack(acc)


def accumulate_cell_constraints(cell, surface, degree, shift=False):
    """Clip the surface to a cell box and accumulate the fragment constraints.

    Fragments are weighted by exact clipped area with their triangle's
    normal; a cell that carries no surface area is an error.  Returns a
    PackedPenalty.  This is the direct (re-clipping) route; the grid build
    stores the same quantities incrementally.
    """
    lo, hi = cell.aabb if isinstance(cell, ImmersedCell) else cell
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    size = float((hi - lo).max())
    eps_area = 1e-12 * size * size
    tri_lo, tri_hi = surface.face_aabbs()
    candidates = np.nonzero(np.all(tri_hi >= lo, axis=1) & np.all(tri_lo <= hi, axis=1))[0]
    tri_idx, areas = [], []
    for t in candidates:
        poly = geo.clip_polygon_box(list(surface.triangle(t)), lo, hi)
        area = geo.polygon_area(poly)
        if area > eps_area:
            tri_idx.append(t)
            areas.append(area)
    if not tri_idx:
        raise ValueError("cell does not intersect the surface: no constraints to accumulate")
    return _penalty_from_fragments(surface, np.array(tri_idx), np.array(areas),
                                   degree, shift=shift and degree == 3)


# ---------------------------------------------------------------------------
# SBCF binary cache (little-endian, format version 1).

_SBCF_MAGIC = b"SBCF"
_SBCF_VERSION = 1


def save_cache(path, grid):
    """Persist the grid and any accumulated penalties."""
    deg = grid.penalty_degree or 0
    shift = 1 if grid.penalty_shift else 0
    with open(path, "wb") as f:
        f.write(_SBCF_MAGIC)
        f.write(struct.pack("<H", _SBCF_VERSION))
        f.write(bytes.fromhex(grid.config_digest()))
        f.write(struct.pack("<BBBd", deg, shift, grid.max_level, grid.padding))
        f.write(struct.pack("<3dd", *grid.root_lo, grid.root_size))
        f.write(struct.pack("<I", len(grid.nodes)))
        for node in grid.nodes:
            f.write(struct.pack("<B3iiB", node.level, *node.ijk, node.parent,
                                _encode_flags(node)))
            if node.children is not None:
                f.write(struct.pack("<8i", *node.children))
            f.write(struct.pack("<I", len(node.tri_idx)))
            f.write(node.tri_idx.astype("<i8").tobytes())
            f.write(node.frag_area.astype("<f8").tobytes())
            if node.penalty is not None:
                payload = node.penalty.payload()
                f.write(struct.pack("<Id", len(payload), node.penalty.total_weight))
                f.write(payload.astype("<f8").tobytes())
            else:
                f.write(struct.pack("<Id", 0, 0.0))


def load_cache(path, surface, max_level, padding=0.05, degree=None, shift=True):
    """Load a cached grid; returns None when the cache does not match."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError:
        return None
    try:
        grid = _parse_cache(data, surface, max_level, padding, degree, shift)
    except (struct.error, ValueError, IndexError):
        return None
    return grid


def _encode_flags(node):
    flags = 1 if node.is_boundary else 0
    flags |= _CLASS_NAMES.index(node.classification) << 1
    flags |= (8 if node.children is not None else 0)
    return flags


def _parse_cache(data, surface, max_level, padding, degree, shift):
    off = 0
    if data[:4] != _SBCF_MAGIC:
        raise ValueError("bad magic")
    off = 4
    (version,) = struct.unpack_from("<H", data, off)
    off += 2
    if version != _SBCF_VERSION:
        raise ValueError("unsupported cache version")
    digest = data[off:off + 32].hex()
    off += 32
    deg, shf, lvl, pad = struct.unpack_from("<BBBd", data, off)
    off += struct.calcsize("<BBBd")
    root = struct.unpack_from("<3dd", data, off)
    off += struct.calcsize("<3dd")
    (count,) = struct.unpack_from("<I", data, off)
    off += 4

    grid = GridHierarchy.__new__(GridHierarchy)
    grid.surface = surface
    grid.max_level = lvl
    grid.padding = pad
    grid.root_lo = np.array(root[:3])
    grid.root_size = root[3]
    grid.nodes = []
    grid._key = {}
    grid._adjacency = {}
    grid.penalty_degree = deg or None
    grid.penalty_shift = bool(shf)

    if lvl != max_level or abs(pad - padding) > 1e-12:
        raise ValueError("cache parameters differ")

    for index in range(count):
        level, i, j, k, parent, flags = struct.unpack_from("<B3iiB", data, off)
        off += struct.calcsize("<B3iiB")
        children = None
        if flags & 8:
            children = list(struct.unpack_from("<8i", data, off))
            off += struct.calcsize("<8i")
        (nfrag,) = struct.unpack_from("<I", data, off)
        off += 4
        tri_idx = np.frombuffer(data, dtype="<i8", count=nfrag, offset=off).copy()
        off += 8 * nfrag
        frag_area = np.frombuffer(data, dtype="<f8", count=nfrag, offset=off).copy()
        off += 8 * nfrag
        npen, weight = struct.unpack_from("<Id", data, off)
        off += struct.calcsize("<Id")
        payload = np.frombuffer(data, dtype="<f8", count=npen, offset=off).copy()
        off += 8 * npen

        size = grid.root_size / (1 << level)
        lo = grid.root_lo + np.array([i, j, k], dtype=float) * size
        node = ImmersedCell(index=index, level=level, ijk=(i, j, k), lo=lo,
                            size=size, parent=parent, children=children,
                            is_boundary=bool(flags & 1),
                            classification=_CLASS_NAMES[(flags >> 1) & 3],
                            tri_idx=tri_idx, frag_area=frag_area)
        if npen:
            node.penalty = _unpack_payload(deg, payload, weight)
        grid.nodes.append(node)
        grid._key[(level, i, j, k)] = index

    if digest != grid.config_digest():
        raise ValueError("cache digest mismatch")
    if degree is not None and (grid.penalty_degree != degree
                               or grid.penalty_shift != bool(shift and degree == 3)):
        raise ValueError("cache penalty parameters differ")
    grid._views = [grid._make_view(lv) for lv in range(grid.max_level + 1)]
    return grid


def _unpack_payload(degree, payload, weight):
    if degree == 3:
        return pen.PackedPenalty(3, payload.copy(), np.zeros(0), 0.0, weight)
    return pen.PackedPenalty(4, payload[:45].copy(), payload[45:54].copy(),
                             float(payload[54]), weight)
