"""Coarse-to-fine frame-field solver.

Each grid level minimizes a graph Dirichlet smoothness energy plus the
accumulated per-cell boundary penalties, alternating preconditioned
conjugate-gradient passes on the quadratic energy with per-cell projection
onto the frame manifold.  Levels are initialized by prolonging the previous
level's solution; the degree-3 sign gauge is re-aligned along a BFS spanning
tree after every projection, since octupole frames are defined up to sign.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import frame_repr as fr
from . import penalty as pen


@dataclass
class SolveConfig:
    degree: int
    boundary_weight: float = 10.0
    smoothness: float = 1.0
    outer_iterations: int = 10
    linear_tolerance: float = 1e-8
    projection_period: int = 1
    seed: int = 0
    random_init: bool = False
    shift: bool = True

    def validate(self):
        if self.degree not in (3, 4):
            raise ValueError(f"degree must be 3 or 4, got {self.degree!r}")
        if self.boundary_weight < 0:
            raise ValueError("boundary_weight must be nonnegative")
        if self.smoothness < 0:
            raise ValueError("smoothness must be nonnegative")
        if self.outer_iterations < 1:
            raise ValueError("outer_iterations must be at least 1")
        if self.linear_tolerance <= 0:
            raise ValueError("linear_tolerance must be positive")
        if self.projection_period < 1:
            raise ValueError("projection_period must be at least 1")


@dataclass
class LevelReport:
    level: int
    n_cells: int
    n_unknowns: int
    cg_iterations: int
    energy_trace: list
    final_energy: float
    converged: bool
    reseeded: int
    wall_time: float

    def to_dict(self):
        return {
            "level": self.level, "n_cells": self.n_cells,
            "n_unknowns": self.n_unknowns, "cg_iterations": self.cg_iterations,
            "energy_trace": [[p, e] for p, e in self.energy_trace],
            "final_energy": self.final_energy, "converged": self.converged,
            "reseeded": self.reseeded, "wall_time": self.wall_time,
        }


@dataclass
class SolveReport:
    levels: list
    total_cg_iterations: int
    final_energy: float
    residual_mean: float
    residual_max: float
    converged: bool
    wall_time: float

    def to_dict(self):
        return {
            "levels": [l.to_dict() for l in self.levels],
            "total_cg_iterations": self.total_cg_iterations,
            "final_energy": self.final_energy,
            "residual_mean": self.residual_mean,
            "residual_max": self.residual_max,
            "converged": self.converged,
            "wall_time": self.wall_time,
        }


class EnergyForm:
    """Quadratic energy over the stacked per-cell coefficient vectors.

    E(x) = smoothness * sum_edges a_ij ||x_i - x_j||^2
         + boundary_weight * sum_cells (x_i A_i x_i - 2 b_i x_i + c_i)
    """

    def __init__(self, degree, n, edges, edge_weights, blocks, linear, constant,
                 smoothness, boundary_weight):
        self.degree = degree
        self.dim = 2 * degree + 1
        self.n = n
        self.edges = edges
        self.edge_weights = edge_weights
        self.blocks = blocks
        self.linear = linear
        self.constant = constant
        self.smoothness = smoothness
        self.boundary_weight = boundary_weight

        diag = np.zeros((n, self.dim))
        if len(edges):
            deg = np.bincount(edges.ravel(), weights=np.repeat(edge_weights, 2), minlength=n)
            diag += smoothness * deg[:, None]
        diag += np.einsum("nii->ni", blocks)
        self.jacobi_diag = np.where(diag > 0, diag, 1.0)

    def matvec(self, x):
        y = np.einsum("nij,nj->ni", self.blocks, x)
        if len(self.edges):
            e0, e1 = self.edges[:, 0], self.edges[:, 1]
            diff = (x[e0] - x[e1]) * self.edge_weights[:, None]
            np.add.at(y, e0, self.smoothness * diff)
            np.add.at(y, e1, -self.smoothness * diff)
        return y

    def energy(self, x):
        val = float(np.einsum("ni,ni->", x, np.einsum("nij,nj->ni", self.blocks, x)))
        val -= 2.0 * float(np.einsum("ni,ni->", self.linear, x))
        val += self.constant
        if len(self.edges):
            diff = x[self.edges[:, 0]] - x[self.edges[:, 1]]
            val += self.smoothness * float(np.einsum("e,ei,ei->", self.edge_weights, diff, diff))
        return val

    def gradient(self, x):
        return 2.0 * (self.matvec(x) - self.linear)


def assemble_energy(grid, level, cfg):
    """EnergyForm over the non-exterior cells of a level view.

    Returns (form, unknown_ids) where unknown_ids are node indices in view
    order.  Penalties are accumulated on demand for the configured degree.
    """
    cfg.validate()
    if grid.penalty_degree != cfg.degree or grid.penalty_shift != bool(cfg.shift and cfg.degree == 3):
        grid.accumulate_penalties(cfg.degree, shift=cfg.shift)
    view = grid.view(level)
    unknown_pos = [k for k, idx in enumerate(view) if grid.nodes[idx].classification != "exterior"]
    if not unknown_pos:
        raise ValueError(f"level {level} has no unknown cells")
    remap = {p: u for u, p in enumerate(unknown_pos)}
    unknown_ids = [view[p] for p in unknown_pos]

    pairs, weights = grid.adjacency(level)
    keep = [e for e, (a, b) in enumerate(pairs) if a in remap and b in remap]
    edges = np.array([[remap[pairs[e, 0]], remap[pairs[e, 1]]] for e in keep],
                     dtype=np.int64).reshape(-1, 2)
    edge_weights = weights[keep] if keep else np.zeros(0)

    n = len(unknown_ids)
    dim = 2 * cfg.degree + 1
    blocks = np.zeros((n, dim, dim))
    linear = np.zeros((n, dim))
    constant = 0.0
    for u, idx in enumerate(unknown_ids):
        packed = grid.nodes[idx].penalty
        if packed is None:
            continue
        bp = pen.unpack(packed)
        blocks[u] = cfg.boundary_weight * bp.matrix
        if cfg.degree == 4:
            linear[u] = cfg.boundary_weight * bp.linear
        constant += cfg.boundary_weight * bp.constant

    form = EnergyForm(cfg.degree, n, edges, edge_weights, blocks, linear, constant,
                      cfg.smoothness, cfg.boundary_weight)
    return form, unknown_ids


def _cg(form, x0, tol, max_iter):
    """Preconditioned CG on  M x = linear ; returns (x, iterations)."""
    x = x0.copy()
    b = form.linear
    r = b - form.matvec(x)
    target = tol * max(float(np.linalg.norm(b)), float(np.linalg.norm(r)), 1e-300)
    z = r / form.jacobi_diag
    p = z.copy()
    rz = float(np.einsum("ni,ni->", r, z))
    iters = 0
    while iters < max_iter and float(np.linalg.norm(r)) > target:
        q = form.matvec(p)
        pq = float(np.einsum("ni,ni->", p, q))
        if pq <= 0:
            break
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        z = r / form.jacobi_diag
        rz_new = float(np.einsum("ni,ni->", r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
        iters += 1
    return x, iters


def _spanning_forest(n, edges):
    """BFS spanning forest: list of (parent, child) in visit order."""
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = np.zeros(n, dtype=bool)
    order = []
    for root in range(n):
        if seen[root]:
            continue
        seen[root] = True
        queue = [root]
        while queue:
            i = queue.pop(0)
            for j in sorted(adj[i]):
                if not seen[j]:
                    seen[j] = True
                    order.append((i, j))
                    queue.append(j)
    return order


def _project(x, degree, angles_prev, forest, first):
    """Per-cell projection onto the frame manifold; returns (x, angles, reseeded)."""
    norms = np.linalg.norm(x, axis=1)
    reseed = norms <= 1e-9
    if np.any(reseed):
        x = x.copy()
        x[reseed] = fr.reference(degree)
    n_starts = 4 if first else 1
    angles, _ = fr.recover_frames(x, n_starts=n_starts, max_iter=30,
                                  initial=None if first else angles_prev)
    h = fr.embed_frames(degree, angles)
    if degree == 3:
        flip = np.einsum("ni,ni->n", h, x) < 0
        h[flip] = -h[flip]
        for i, j in forest:
            if h[i] @ h[j] < 0:
                h[j] = -h[j]
    return h, angles, int(np.count_nonzero(reseed))


def solve_level(grid, level, cfg, initial=None):
    """Minimize the level energy; returns (values, angles, LevelReport)."""
    cfg.validate()
    t0 = time.perf_counter()
    form, unknown_ids = assemble_energy(grid, level, cfg)
    n, dim = form.n, form.dim

    if initial is None:
        if cfg.random_init:
            rng = np.random.default_rng(cfg.seed)
            x = rng.normal(size=(n, dim))
            x /= np.linalg.norm(x, axis=1, keepdims=True)
        else:
            x = np.tile(fr.reference(cfg.degree), (n, 1))
    else:
        x = np.array(initial, dtype=float)
        if x.shape != (n, dim):
            raise ValueError(f"initial values of shape {x.shape}, expected {(n, dim)}")

    cap = max(16, int(10 * np.sqrt(n * dim)))
    forest = _spanning_forest(n, form.edges)
    trace = []
    cg_total = 0
    reseeded = 0
    angles = None
    converged = False
    last_proj_energy = None

    for it in range(cfg.outer_iterations):
        x, its = _cg(form, x, cfg.linear_tolerance, cap)
        cg_total += its
        trace.append(("cg", form.energy(x)))

        if (it + 1) % cfg.projection_period == 0 or it == cfg.outer_iterations - 1:
            x, angles, rs = _project(x, cfg.degree, angles, forest, first=angles is None)
            reseeded += rs
            e = form.energy(x)
            trace.append(("projection", e))
            if last_proj_energy is not None and \
                    abs(last_proj_energy - e) < 1e-10 * max(1.0, abs(e)):
                converged = True
                break
            last_proj_energy = e

    final_energy = trace[-1][1]
    report = LevelReport(level=level, n_cells=len(grid.view(level)), n_unknowns=n,
                         cg_iterations=cg_total, energy_trace=trace,
                         final_energy=final_energy, converged=converged,
                         reseeded=reseeded, wall_time=time.perf_counter() - t0)
    return x, angles, report


def _final_stats(x):
    _, res = fr.recover_frames(x, n_starts=2, max_iter=40)
    return float(res.mean()), float(res.max())


def solve_coarse_to_fine(grid, cfg):
    """Solve every level, prolonging each solution to seed the next.

    Returns (values at the finest view, SolveReport).
    """
    cfg.validate()
    t0 = time.perf_counter()
    reports = []
    values = None
    for level in range(grid.max_level + 1):
        init = None if level == 0 else grid.prolong(level - 1, values)
        if init is not None:
            init = _filter_to_unknowns(grid, level - 1, level, values, init)
        values, _, rep = solve_level(grid, level, cfg, initial=init)
        reports.append(rep)
    res_mean, res_max = _final_stats(values)
    report = SolveReport(levels=reports,
                         total_cg_iterations=sum(r.cg_iterations for r in reports),
                         final_energy=reports[-1].final_energy,
                         residual_mean=res_mean, residual_max=res_max,
                         converged=reports[-1].converged,
                         wall_time=time.perf_counter() - t0)
    return values, report


def _filter_to_unknowns(grid, src_level, dst_level, src_values, prolonged):
    """Map a full-view prolongation onto the destination unknown ordering."""
    dst_view = grid.view(dst_level)
    keep = [k for k, idx in enumerate(dst_view)
            if grid.nodes[idx].classification != "exterior"]
    return prolonged[keep]


def solve_flat(grid, cfg):
    """Single solve at the finest level (baseline for the coarse-to-fine path)."""
    cfg.validate()
    t0 = time.perf_counter()
    values, _, rep = solve_level(grid, grid.max_level, cfg)
    res_mean, res_max = _final_stats(values)
    report = SolveReport(levels=[rep], total_cg_iterations=rep.cg_iterations,
                         final_energy=rep.final_energy,
                         residual_mean=res_mean, residual_max=res_max,
                         converged=rep.converged, wall_time=time.perf_counter() - t0)
    return values, report
