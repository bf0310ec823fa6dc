"""Triangular meshes, barycentric projectors and P1 finite-element matrices.

The SPDE representation of a Matern field lives on the nodes of a
triangulation.  This module builds that triangulation (constrained Delaunay
with quality refinement plus an outer extension ring), maps arbitrary
locations onto node weights, and assembles the lumped mass and stiffness
matrices from which the sparse precision is formed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import shapely
import triangle
from scipy.spatial import cKDTree
from shapely.geometry import MultiPoint, Polygon

DUPLICATE_TOL = 1e-9


class MeshError(ValueError):
    """Raised for degenerate geometry or invalid mesh input."""


class OutsideMeshError(MeshError):
    """Raised when a projector row for a point outside the mesh is used."""


@dataclass(frozen=True)
class TriangleMesh:
    """Immutable 2-D triangulation.

    Attributes
    ----------
    nodes : (n, 2) float array of node coordinates (km).
    triangles : (m, 3) int array of node indices, counter-clockwise.
    boundary : (b, 2) float array, the inner (data) boundary polygon.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    _tree: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64)
        nodes.setflags(write=False)
        tris.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "boundary", np.asarray(self.boundary, dtype=float))

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def total_area(self) -> float:
        return float(self.signed_areas().sum())

    def translated(self, shift) -> "TriangleMesh":
        shift = np.asarray(shift, dtype=float)
        return TriangleMesh(self.nodes + shift, self.triangles, self.boundary + shift)

    def _strtree(self):
        if self._tree is None:
            polys = shapely.polygons(self.nodes[self.triangles])
            object.__setattr__(self, "_tree", shapely.STRtree(polys))
        return self._tree


def _merge_cutoff(points: np.ndarray, cutoff: float) -> np.ndarray:
    """Greedy merge: keep the first point of every cluster closer than cutoff."""
    if len(points) == 0:
        return points
    tree = cKDTree(points)
    keep = np.ones(len(points), dtype=bool)
    for i in range(len(points)):
        if not keep[i]:
            continue
        for j in tree.query_ball_point(points[i], cutoff):
            if j > i:
                keep[j] = False
    return points[keep]


def _check_points(locations) -> np.ndarray:
    pts = np.asarray(locations, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(pts)):
        raise MeshError("locations must have finite coordinates")
    if len(pts) < 3:
        raise MeshError("at least 3 locations are required")
    centred = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    if sv[-1] <= 1e-12 * max(sv[0], 1.0):
        raise MeshError("degenerate geometry: all locations are collinear")
    return pts


def _ring_coords(poly: Polygon) -> np.ndarray:
    ring = np.asarray(poly.exterior.coords)[:-1]
    if not shapely.LinearRing(ring).is_ccw:
        ring = ring[::-1]
    return ring


def build_mesh(locations, boundary=None, max_edge_inner: float = 10.0,
               max_edge_outer: float | None = None, cutoff: float = 1e-3,
               min_angle: float = 25.0) -> TriangleMesh:
    """Build a refined constrained Delaunay mesh around ``locations``.

    Parameters
    ----------
    locations : (n, 2) array-like
        Data locations; after merging points closer than ``cutoff`` each
        becomes a mesh node.
    boundary : (b, 2) array-like or shapely Polygon, optional
        Simple polygon enclosing the data.  Defaults to the convex hull.
    max_edge_inner, max_edge_outer : float
        Target maximum edge lengths inside the boundary and in the extension
        ring.  The ring has width ``2 * max_edge_outer``.
    cutoff : float
        Merge distance for near-duplicate input points.
    min_angle : float
        Minimum triangle angle (degrees) for the quality refinement.
    """
    pts = _check_points(locations)
    if max_edge_inner <= 0 or cutoff <= 0:
        raise MeshError("max_edge_inner and cutoff must be positive")
    if max_edge_outer is None:
        max_edge_outer = 2.0 * max_edge_inner
    if boundary is None:
        poly = MultiPoint(pts).convex_hull
    elif isinstance(boundary, Polygon):
        poly = boundary
    else:
        poly = Polygon(np.asarray(boundary, dtype=float))
    if not isinstance(poly, Polygon) or poly.area <= 0:
        raise MeshError("degenerate boundary polygon")
    if not poly.exterior.is_simple or not poly.is_valid:
        raise MeshError("boundary polygon is not simple")
    if not np.all(shapely.covers(poly.buffer(1e-9), shapely.points(pts))):
        raise MeshError("all locations must lie inside the boundary")

    inner = _ring_coords(shapely.segmentize(poly, max_edge_inner))
    outer_poly = poly.buffer(2.0 * max_edge_outer, quad_segs=4)
    outer = _ring_coords(shapely.segmentize(outer_poly, max_edge_outer))

    interior = _merge_cutoff(pts, cutoff)
    # boundary vertices take precedence over data points they coincide with
    if len(interior):
        d, _ = cKDTree(inner).query(interior)
        interior = interior[d > cutoff]

    verts = np.vstack([inner, outer, interior])
    ni, no = len(inner), len(outer)
    seg_inner = np.column_stack([np.arange(ni), (np.arange(ni) + 1) % ni])
    seg_outer = ni + np.column_stack([np.arange(no), (np.arange(no) + 1) % no])
    area_in = np.sqrt(3.0) / 4.0 * max_edge_inner ** 2
    area_out = np.sqrt(3.0) / 4.0 * max_edge_outer ** 2
    ring_pt = outer_poly.difference(poly).representative_point()
    in_pt = poly.representative_point()
    regions = np.array([[in_pt.x, in_pt.y, 1, area_in],
                        [ring_pt.x, ring_pt.y, 2, area_out]])
    out = triangle.triangulate(
        {"vertices": verts, "segments": np.vstack([seg_inner, seg_outer]),
         "regions": regions},
        f"pq{min_angle:g}aAQ",
    )
    nodes = np.asarray(out["vertices"], dtype=float)
    tris = np.asarray(out["triangles"], dtype=np.int64)
    nodes, tris = _compact(nodes, tris)
    mesh = TriangleMesh(nodes, _orient(nodes, tris), inner)
    validate_mesh(mesh)
    return mesh


def _compact(nodes, tris):
    used = np.unique(tris)
    remap = -np.ones(len(nodes), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return nodes[used], remap[tris]


def _orient(nodes, tris):
    p = nodes[tris]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    tris = tris.copy()
    tris[neg] = tris[neg][:, [0, 2, 1]]
    return tris


def validate_mesh(mesh: TriangleMesh) -> None:
    """Check the structural invariants; raise MeshError on violation."""
    if np.any(mesh.signed_areas() <= 0):
        raise MeshError("mesh has zero-area or negatively oriented triangles")
    if mesh.n_nodes > 1:
        d, _ = cKDTree(mesh.nodes).query(mesh.nodes, k=2)
        if np.any(d[:, 1] <= DUPLICATE_TOL):
            raise MeshError("mesh has duplicate nodes")


# --------------------------------------------------------------------------
# Projection
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ProjectorMatrix:
    """Sparse barycentric weights mapping node values to target values."""

    matrix: sp.csr_matrix
    valid: np.ndarray

    @property
    def shape(self):
        return self.matrix.shape

    def require_valid(self) -> sp.csr_matrix:
        if not np.all(self.valid):
            bad = np.flatnonzero(~self.valid)
            raise OutsideMeshError(
                f"{len(bad)} target(s) lie outside the mesh (first index {bad[0]})")
        return self.matrix

    def __matmul__(self, other):
        return self.require_valid() @ other


def barycentric(tri_xy: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of points ``p`` (k, 2) in triangles (k, 3, 2)."""
    x1, y1 = tri_xy[:, 0, 0], tri_xy[:, 0, 1]
    x2, y2 = tri_xy[:, 1, 0], tri_xy[:, 1, 1]
    x3, y3 = tri_xy[:, 2, 0], tri_xy[:, 2, 1]
    det = (y2 - y3) * (x1 - x3) + (x3 - x2) * (y1 - y3)
    l1 = ((y2 - y3) * (p[:, 0] - x3) + (x3 - x2) * (p[:, 1] - y3)) / det
    l2 = ((y3 - y1) * (p[:, 0] - x3) + (x1 - x3) * (p[:, 1] - y3)) / det
    return np.column_stack([l1, l2, 1.0 - l1 - l2])


def projector(mesh: TriangleMesh, targets, tol: float = 1e-10) -> ProjectorMatrix:
    """Barycentric projector from mesh nodes to ``targets``.

    Rows for targets outside every triangle are left empty and flagged in
    ``valid``; multiplying through an invalid projector raises.
    """
    pts = np.asarray(targets, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return ProjectorMatrix(sp.csr_matrix((0, mesh.n_nodes)), np.ones(0, dtype=bool))
    cand_pt, cand_tri = mesh._strtree().query(shapely.points(pts))
    best_tri = -np.ones(n, dtype=np.int64)
    best_w = np.zeros((n, 3))
    best_score = np.full(n, -np.inf)
    if len(cand_pt):
        w = barycentric(mesh.nodes[mesh.triangles[cand_tri]], pts[cand_pt])
        score = w.min(axis=1)
        order = np.lexsort((-score, cand_pt))
        first = np.ones(len(order), dtype=bool)
        first[1:] = cand_pt[order][1:] != cand_pt[order][:-1]
        sel = order[first]
        best_tri[cand_pt[sel]] = cand_tri[sel]
        best_w[cand_pt[sel]] = w[sel]
        best_score[cand_pt[sel]] = score[sel]
    valid = best_score >= -tol
    rows = np.repeat(np.arange(n), 3)
    cols = mesh.triangles[np.where(valid, best_tri, 0)].ravel()
    vals = np.where(valid[:, None], best_w, 0.0).ravel()
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, mesh.n_nodes))
    mat.eliminate_zeros()
    return ProjectorMatrix(mat, valid)


# --------------------------------------------------------------------------
# FEM assembly
# --------------------------------------------------------------------------

def fem_matrices(mesh: TriangleMesh) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Lumped P1 mass matrix (diagonal) and P1 stiffness matrix."""
    p = mesh.nodes[mesh.triangles]
    area = mesh.signed_areas()
    if np.any(area <= 0):
        raise MeshError("zero-area triangle")
    n = mesh.n_nodes
    tri = mesh.triangles
    c_diag = np.bincount(tri.ravel(), weights=np.repeat(area / 3.0, 3), minlength=n)
    # edge vectors opposite each vertex
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    local = np.einsum("tid,tjd->tij", e, e) / (4.0 * area)[:, None, None]
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    G = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))
    G.sum_duplicates()
    return sp.diags(c_diag).tocsr(), G


def spde_precision(C_lumped, G, log_tau: float, log_kappa: float) -> sp.csr_matrix:
    """Precision of the alpha=2 SPDE: tau^2 (k^4 C + 2 k^2 G + G C^-1 G)."""
    if not (np.isfinite(log_tau) and np.isfinite(log_kappa)):
        raise ValueError("non-finite SPDE parameters")
    c = C_lumped.diagonal()
    if np.any(c <= 0):
        raise ValueError("lumped mass must be positive")
    k2 = np.exp(2.0 * log_kappa)
    tau2 = np.exp(2.0 * log_tau)
    GCG = G @ sp.diags(1.0 / c) @ G
    Q = tau2 * (k2 * k2 * sp.diags(c) + 2.0 * k2 * G + GCG)
    return sp.csr_matrix(Q)


# --------------------------------------------------------------------------
# Plain-text serialisation
# --------------------------------------------------------------------------

def write_mesh(mesh: TriangleMesh, path) -> None:
    """Write ``nodes N triangles M boundary B`` header then indexed rows."""
    lines = [f"nodes {mesh.n_nodes} triangles {mesh.n_triangles} boundary {len(mesh.boundary)}"]
    lines += [f"{i} {x!r} {y!r}" for i, (x, y) in enumerate(mesh.nodes.tolist())]
    lines += [f"{i} {a} {b} {c}" for i, (a, b, c) in enumerate(mesh.triangles.tolist())]
    lines += [f"{i} {x!r} {y!r}" for i, (x, y) in enumerate(mesh.boundary.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> TriangleMesh:
    text = Path(path).read_text().split("\n")
    head = text[0].split()
    try:
        n, m = int(head[1]), int(head[3])
        b = int(head[5]) if len(head) > 5 else 0
    except (IndexError, ValueError) as exc:
        raise MeshError(f"bad mesh header: {text[0]!r}") from exc
    body = [ln.split() for ln in text[1:] if ln.strip()]
    nodes = np.array([[float(r[1]), float(r[2])] for r in body[:n]])
    tris = np.array([[int(r[1]), int(r[2]), int(r[3])] for r in body[n:n + m]], dtype=np.int64)
    bnd = np.array([[float(r[1]), float(r[2])] for r in body[n + m:n + m + b]]).reshape(-1, 2)
    return TriangleMesh(nodes, tris, bnd)
