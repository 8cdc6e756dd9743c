"""Triangulations of the unit disk with marked boundary arcs.

The mesher lays vertices on concentric rings (counts proportional to the
radius) and triangulates ring pairs with an angular two-pointer sweep.
This is fully deterministic: the same target vertex count always yields
the same mesh, which keeps regression tests and noise seeds meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * math.pi

# Quality floor asserted at generation time; guards stiffness conditioning.
MIN_ANGLE_DEG = 15.0


@dataclass(frozen=True)
class BoundaryArc:
    """Accessible boundary arc {theta in [0, alpha]} on the unit circle."""

    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= TWO_PI:
            raise ValueError(f"arc angle must lie in (0, 2*pi], got {self.alpha}")

    @property
    def is_full_circle(self) -> bool:
        return self.alpha >= TWO_PI


FULL_CIRCLE = BoundaryArc(TWO_PI)


class Mesh:
    """Conforming triangulation of the unit disk.

    Parameters
    ----------
    vertices : (V, 2) float array
        Vertex coordinates; boundary vertices lie exactly on the unit circle.
    triangles : (T, 3) int array
        Vertex index triples, counterclockwise orientation.
    boundary_edges : (B, 2) int array
        Vertex index pairs on the boundary, ordered counterclockwise.
    boundary_edge_angles : (B,) float array
        Polar angle of each boundary edge midpoint, in [0, 2*pi).

    Instances are immutable after construction and safe to share between
    threads; derived geometry (areas, P1 gradients, local matrices) is
    computed lazily and cached.
    """

    def __init__(self, vertices, triangles, boundary_edges, boundary_edge_angles):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int32)
        self.boundary_edges = np.ascontiguousarray(boundary_edges, dtype=np.int32)
        self.boundary_edge_angles = np.ascontiguousarray(
            boundary_edge_angles, dtype=np.float64
        )
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must have shape (V, 2)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError("triangles must have shape (T, 3)")
        if self.boundary_edges.shape[0] != self.boundary_edge_angles.shape[0]:
            raise ValueError("boundary edge / angle count mismatch")
        for arr in (
            self.vertices,
            self.triangles,
            self.boundary_edges,
            self.boundary_edge_angles,
        ):
            arr.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @cached_property
    def triangle_areas(self) -> np.ndarray:
        """(T,) signed triangle areas (positive for CCW orientation)."""
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        areas.setflags(write=False)
        return areas

    @cached_property
    def hat_gradients(self) -> np.ndarray:
        """(T, 3, 2) gradients of the three P1 hat functions per triangle."""
        p = self.vertices[self.triangles]
        x, y = p[..., 0], p[..., 1]
        nxt = [1, 2, 0]
        prv = [2, 0, 1]
        b = y[:, nxt] - y[:, prv]
        c = x[:, prv] - x[:, nxt]
        grads = np.stack([b, c], axis=-1) / (2.0 * self.triangle_areas)[:, None, None]
        grads.setflags(write=False)
        return grads

    @cached_property
    def local_stiffness(self) -> np.ndarray:
        """(T, 3, 3) element stiffness blocks for unit conductivity."""
        g = self.hat_gradients
        s = np.einsum("tid,tjd->tij", g, g) * self.triangle_areas[:, None, None]
        s.setflags(write=False)
        return s

    @cached_property
    def vertex_patch_areas(self) -> np.ndarray:
        """(V,) total area of the triangles incident to each vertex."""
        w = np.bincount(
            self.triangles.ravel(),
            weights=np.repeat(self.triangle_areas, 3),
            minlength=self.num_vertices,
        )
        w.setflags(write=False)
        return w

    @cached_property
    def total_area(self) -> float:
        return float(self.triangle_areas.sum())

    def edge_count(self) -> int:
        """Number of distinct edges (for Euler characteristic checks)."""
        t = self.triangles
        pairs = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        pairs = np.sort(pairs, axis=1)
        return np.unique(pairs, axis=0).shape[0]

    def min_angle_deg(self) -> float:
        """Smallest interior angle over all triangles, in degrees."""
        p = self.vertices[self.triangles]
        angles = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cosang = np.einsum("td,td->t", a, b) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
            )
            angles.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
        return float(np.min(angles))


def _ring_layout(target_vertex_count: int) -> list[int]:
    """Per-ring vertex counts whose total is close to the target.

    Ring k (radius k/n) gets about c*k vertices with c chosen to hit the
    target; c near 2*pi keeps triangles close to equilateral. The outer
    ring count is rounded to a multiple of 4 when that stays within the
    +-20% budget, so that the quarter/half/three-quarter arcs start and
    end exactly on boundary vertices.
    """
    n = max(1, round((-1.0 + math.sqrt(1.0 + 4.0 * (target_vertex_count - 1) / math.pi)) / 2.0))
    c = 2.0 * (target_vertex_count - 1) / (n * (n + 1))
    counts = [max(3, round(c * k)) for k in range(1, n + 1)]
    rounded = counts.copy()
    rounded[-1] = max(4, 4 * round(counts[-1] / 4))
    if abs(1 + sum(rounded) - target_vertex_count) <= 0.2 * target_vertex_count:
        return rounded
    return counts


def _strip_triangles(inner: np.ndarray, outer: np.ndarray) -> list[tuple[int, int, int]]:
    """Triangulate the annulus strip between two vertex rings.

    Both rings are ordered by angle starting at theta = 0. The sweep
    advances whichever ring has the smaller next angle (exact integer
    comparison), producing len(inner) + len(outer) CCW triangles.
    """
    mi, mo = len(inner), len(outer)
    tris = []
    i = j = 0
    while i < mi or j < mo:
        if j < mo and (i == mi or (j + 1) * mi <= (i + 1) * mo):
            tris.append((inner[i % mi], outer[j % mo], outer[(j + 1) % mo]))
            j += 1
        else:
            tris.append((inner[i % mi], outer[j % mo], inner[(i + 1) % mi]))
            i += 1
    return tris


def generate_disk_mesh(target_vertex_count: int) -> Mesh:
    """Generate a deterministic unit-disk triangulation.

    Parameters
    ----------
    target_vertex_count : int
        Requested vertex count (>= 4); the result is within +-20%.

    Returns
    -------
    Mesh
        Validated mesh: positive CCW areas, conforming connectivity,
        Euler characteristic 1, minimum angle above ``MIN_ANGLE_DEG``,
        boundary vertices placed exactly on the unit circle.
    """
    if target_vertex_count < 4:
        raise ValueError(
            f"target_vertex_count must be >= 4, got {target_vertex_count}"
        )
    counts = _ring_layout(target_vertex_count)
    n_rings = len(counts)

    verts = [(0.0, 0.0)]
    ring_indices: list[np.ndarray] = []
    start = 1
    for k, m in enumerate(counts, start=1):
        r = k / n_rings
        theta = TWO_PI * np.arange(m) / m
        ring = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
        verts.extend(map(tuple, ring))
        ring_indices.append(np.arange(start, start + m))
        start += m
    vertices = np.asarray(verts)

    tris: list[tuple[int, int, int]] = []
    first = ring_indices[0]
    m0 = len(first)
    for j in range(m0):
        tris.append((0, first[j], first[(j + 1) % m0]))
    for k in range(1, n_rings):
        tris.extend(_strip_triangles(ring_indices[k - 1], ring_indices[k]))

    last = ring_indices[-1]
    mb = len(last)
    boundary_edges = np.column_stack([last, np.roll(last, -1)])
    # midpoint angle of edge (i, i+1) on an equally spaced ring
    mid_angles = (TWO_PI * (np.arange(mb) + 0.5) / mb) % TWO_PI

    mesh = Mesh(vertices, np.asarray(tris), boundary_edges, mid_angles)
    _validate(mesh)
    return mesh


def _validate(mesh: Mesh) -> None:
    if np.any(mesh.triangle_areas <= 0.0):
        raise AssertionError("mesh contains non-CCW or degenerate triangles")
    v, e, t = mesh.num_vertices, mesh.edge_count(), mesh.num_triangles
    if v - e + t != 1:
        raise AssertionError(f"Euler characteristic {v - e + t} != 1")
    min_angle = mesh.min_angle_deg()
    if min_angle <= MIN_ANGLE_DEG:
        raise AssertionError(
            f"mesh quality floor violated: min angle {min_angle:.2f} deg"
        )
    bverts = np.unique(mesh.boundary_edges)
    radii = np.linalg.norm(mesh.vertices[bverts], axis=1)
    if np.max(np.abs(radii - 1.0)) > 1e-12:
        raise AssertionError("boundary vertices not on the unit circle")


def accessible_boundary_edges(mesh: Mesh, arc: BoundaryArc) -> np.ndarray:
    """Indices of boundary edges whose midpoint angle lies in [0, alpha]."""
    return np.flatnonzero(mesh.boundary_edge_angles <= arc.alpha)


def locate_points(mesh: Mesh, points: np.ndarray):
    """Find containing triangles and barycentric coordinates for points.

    Uses a KD-tree over triangle centroids and checks nearby candidates;
    points marginally outside the mesh polygon (circle points between
    boundary vertices of a coarser polygon) are nudged toward the origin
    before falling back to the nearest vertex.

    Returns
    -------
    tri_idx : (N,) int array
        Containing triangle per point, -1 where the nearest-vertex
        fallback was used.
    bary : (N, 3) float array
        Barycentric coordinates (rows of tri_idx == -1 hold a 1 at the
        nearest vertex's local slot of triangle 0; see ``interpolate``).
    nearest_vertex : (N,) int array
        Nearest mesh vertex, used as the fallback.
    """
    from scipy.spatial import cKDTree

    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    tree = cKDTree(centroids)
    n = points.shape[0]
    tri_idx = np.full(n, -1, dtype=np.int64)
    bary = np.zeros((n, 3))

    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]

    def try_assign(pts, rows, k, tol):
        _, cand = tree.query(pts, k=k)
        cand = np.atleast_2d(cand)
        remaining = np.ones(len(rows), dtype=bool)
        for c in range(cand.shape[1]):
            if not remaining.any():
                break
            act = np.flatnonzero(remaining)
            t = cand[act, c]
            rel = pts[act] - p[t, 0]
            l1 = (rel[:, 0] * d2[t, 1] - rel[:, 1] * d2[t, 0]) / det[t]
            l2 = (d1[t, 0] * rel[:, 1] - d1[t, 1] * rel[:, 0]) / det[t]
            l0 = 1.0 - l1 - l2
            ok = (l0 >= -tol) & (l1 >= -tol) & (l2 >= -tol)
            hit = act[ok]
            tri_idx[rows[hit]] = t[ok]
            bary[rows[hit], 0] = l0[ok]
            bary[rows[hit], 1] = l1[ok]
            bary[rows[hit], 2] = l2[ok]
            remaining[act[ok]] = False

    all_rows = np.arange(n)
    try_assign(points, all_rows, k=min(8, mesh.num_triangles), tol=1e-12)
    miss = np.flatnonzero(tri_idx < 0)
    if miss.size:
        # Pull marginally exterior points inside the mesh polygon. Points on
        # the unit circle sit outside the boundary chords by up to the chord
        # sagitta L^2/8, so shrink by twice that.
        if mesh.boundary_edges.size:
            chords = (
                mesh.vertices[mesh.boundary_edges[:, 1]]
                - mesh.vertices[mesh.boundary_edges[:, 0]]
            )
            shrink = float(np.max(np.einsum("bd,bd->b", chords, chords))) / 4.0
        else:
            shrink = 1e-9
        nudged = points[miss] * (1.0 - shrink)
        try_assign(nudged, miss, k=min(32, mesh.num_triangles), tol=1e-9)

    vtree = cKDTree(mesh.vertices)
    _, nearest_vertex = vtree.query(points)
    return tri_idx, bary, np.atleast_1d(nearest_vertex)


def interpolate(mesh: Mesh, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate a P1 nodal field at arbitrary points (barycentric)."""
    tri_idx, bary, nearest = locate_points(mesh, points)
    out = np.empty(tri_idx.shape[0])
    inside = tri_idx >= 0
    corner = mesh.triangles[tri_idx[inside]]
    out[inside] = np.einsum("nc,nc->n", values[corner], bary[inside])
    out[~inside] = values[nearest[~inside]]
    return out
