"""Spherical triangulations: construction, refinement, queries, validation.

A mesh stores unit vertices (rows of ``vertices``) and counterclockwise
oriented triangles (rows of ``triangles``, integer vertex indices).  Two
triangles of a valid mesh either share a full edge, share a single vertex,
or are disjoint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import spatial

from . import geometry
from .errors import LocationError, MeshError, PatchError
from .geometry import SphericalTriangle, unit_vector

__all__ = [
    "TriMesh",
    "base_mesh",
    "refine",
    "submesh",
    "patch_extract",
    "locate",
    "locate_many",
    "MeshStats",
    "mesh_stats",
    "ValidationReport",
    "validate",
    "mesh_to_dict",
    "mesh_from_dict",
    "save_mesh",
    "load_mesh",
]

#: Barycentric slack used when testing whether a point lies inside a triangle.
CONTAINMENT_TOL = 1e-12

#: locate() switches from a linear scan to the bounding-cap index above this.
_BRUTE_FORCE_LIMIT = 512


class TriMesh:
    """Immutable spherical triangulation.

    Parameters
    ----------
    vertices : (V, 3) array of unit vectors.
    triangles : (T, 3) integer array; each row indexes three vertices in
        counterclockwise order as seen from outside the sphere.
    """

    def __init__(self, vertices, triangles):
        vertices = np.ascontiguousarray(vertices, dtype=float)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError(f"vertices must have shape (V, 3), got {vertices.shape}")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError(f"triangles must have shape (T, 3), got {triangles.shape}")
        if triangles.size == 0:
            raise MeshError("mesh has no triangles")
        if triangles.min() < 0 or triangles.max() >= len(vertices):
            raise MeshError("triangle vertex index out of range")
        norms = np.linalg.norm(vertices, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            bad = int(np.argmax(np.abs(norms - 1.0)))
            raise MeshError(
                f"vertex {bad} is not on the unit sphere (norm {norms[bad]:.12f}); "
                "normalize vertices before building the mesh"
            )
        for t, row in enumerate(triangles):
            if len(set(row.tolist())) != 3:
                raise MeshError(f"triangle {t} repeats a vertex index: {row.tolist()}")
        self.vertices = vertices
        self.triangles = triangles
        self.vertices.setflags(write=False)
        self.triangles.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle(self, t: int) -> SphericalTriangle:
        """The ``t``-th triangle as a geometry object."""
        return self._triangle_objects[t]

    @cached_property
    def _triangle_objects(self) -> list[SphericalTriangle]:
        return [SphericalTriangle(self.vertices[row]) for row in self.triangles]

    @cached_property
    def _inverses(self) -> np.ndarray:
        """Stacked inverse coordinate matrices, shape (T, 3, 3); row kappa of
        entry t maps a point to its barycentric coordinate b_kappa."""
        mats = self.vertices[self.triangles]          # (T, 3, 3), vertex rows
        return np.linalg.inv(np.swapaxes(mats, 1, 2))

    @cached_property
    def edge_incidence(self) -> dict[tuple[int, int], list[tuple[int, int]]]:
        """Map from undirected edge (i < j) to a list of (triangle, local
        edge) incidences; local edge e runs from corner e to corner (e+1)%3."""
        out: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for t, (a, b, c) in enumerate(self.triangles):
            for e, (u, v) in enumerate(((a, b), (b, c), (c, a))):
                key = (int(u), int(v)) if u < v else (int(v), int(u))
                out.setdefault(key, []).append((t, e))
        return out

    @cached_property
    def interior_edges(self) -> list[tuple[tuple[int, int], tuple[int, int], tuple[int, int]]]:
        """Edges with exactly two incident triangles, as tuples
        ``(edge, (t1, e1), (t2, e2))`` sorted by edge key."""
        out = []
        for key in sorted(self.edge_incidence):
            inc = self.edge_incidence[key]
            if len(inc) == 2:
                out.append((key, inc[0], inc[1]))
        return out

    @cached_property
    def boundary_edges(self) -> list[tuple[int, int]]:
        """Edges with exactly one incident triangle."""
        return sorted(k for k, inc in self.edge_incidence.items() if len(inc) == 1)

    @cached_property
    def _caps(self) -> tuple[np.ndarray, np.ndarray]:
        """Bounding-cap centers and cos(radius) for the spatial index."""
        centers = unit_vector(self.vertices[self.triangles].sum(axis=1))
        cos_r = np.ones(self.n_triangles)
        for t in range(self.n_triangles):
            d = geometry.geodesic_distance(self.vertices[self.triangles[t]], centers[t])
            cos_r[t] = np.cos(min(np.pi, float(d.max()) + 1e-9))
        return centers, cos_r

    def barycentric_all(self, points) -> np.ndarray:
        """Barycentric coordinates of each point w.r.t. every triangle,
        shape (n, T, 3).  Memory grows with n*T; chunk at the call site."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.einsum("tkc,nc->ntk", self._inverses, pts)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TriMesh)
            and self.vertices.shape == other.vertices.shape
            and self.triangles.shape == other.triangles.shape
            and np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
        )

    def __repr__(self) -> str:
        return f"TriMesh(V={self.n_vertices}, T={self.n_triangles})"


def locate(mesh: TriMesh, p) -> tuple[int, np.ndarray]:
    """Find the lowest-index triangle containing ``p``.

    Returns ``(t, bary)``.  Points on shared edges or vertices belong to all
    incident triangles; the lowest triangle index wins, so the answer is
    deterministic.  Raises :class:`LocationError` when no triangle contains
    the point.
    """
    p = unit_vector(np.asarray(p, dtype=float).reshape(3))
    if mesh.n_triangles < _BRUTE_FORCE_LIMIT:
        candidates = range(mesh.n_triangles)
    else:
        centers, cos_r = mesh._caps
        candidates = np.nonzero(centers @ p >= cos_r)[0]
    for t in candidates:
        b = mesh._inverses[t] @ p
        if np.all(b >= -CONTAINMENT_TOL):
            return int(t), b
    raise LocationError(f"point {p.tolist()} lies outside every triangle of the mesh")


def locate_many(mesh: TriMesh, points, chunk: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`locate` over rows of ``points``.

    Returns ``(idx, bary)`` where ``idx[i] == -1`` marks points outside the
    mesh (callers decide whether that is an error) and ``bary[i]`` holds the
    barycentric coordinates w.r.t. triangle ``idx[i]``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    idx = np.full(n, -1, dtype=np.int64)
    bary = np.zeros((n, 3))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        b = mesh.barycentric_all(pts[lo:hi])           # (c, T, 3)
        inside = np.all(b >= -CONTAINMENT_TOL, axis=2)  # (c, T)
        any_hit = inside.any(axis=1)
        first = np.argmax(inside, axis=1)               # lowest index among hits
        sel = np.where(any_hit, first, 0)
        idx[lo:hi] = np.where(any_hit, first, -1)
        bary[lo:hi] = b[np.arange(hi - lo), sel]
    return idx, bary


def base_mesh(kind: str) -> TriMesh:
    """Platonic starting meshes: ``"octahedron"`` (6 vertices, 8 triangles)
    or ``"icosahedron"`` (12 vertices, 20 triangles)."""
    if kind == "octahedron":
        v = np.array(
            [
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [-1.0, 0.0, 0.0],
                [0.0, -1.0, 0.0],
                [0.0, 0.0, -1.0],
            ]
        )
        tri = np.array(
            [
                [0, 1, 2],
                [1, 3, 2],
                [3, 4, 2],
                [4, 0, 2],
                [1, 0, 5],
                [3, 1, 5],
                [4, 3, 5],
                [0, 4, 5],
            ]
        )
        return TriMesh(v, tri)
    if kind == "icosahedron":
        g = (1.0 + np.sqrt(5.0)) / 2.0
        raw = np.array(
            [
                [-1, g, 0], [1, g, 0], [-1, -g, 0], [1, -g, 0],
                [0, -1, g], [0, 1, g], [0, -1, -g], [0, 1, -g],
                [g, 0, -1], [g, 0, 1], [-g, 0, -1], [-g, 0, 1],
            ],
            dtype=float,
        )
        v = unit_vector(raw)
        tri = np.array(
            [
                [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
                [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
                [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
                [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
            ]
        )
        # Make every face counterclockwise from outside.
        for row in tri:
            if np.linalg.det(v[row]) < 0:
                row[1], row[2] = row[2], row[1]
        return TriMesh(v, tri)
    raise MeshError(f"unknown base mesh kind {kind!r}")


def refine(mesh: TriMesh, levels: int = 1) -> TriMesh:
    """Split every triangle into four by normalized edge midpoints,
    ``levels`` times.  Orientation is inherited from the parents."""
    if levels < 0:
        raise MeshError("refinement level must be nonnegative")
    out = mesh
    for _ in range(levels):
        verts = list(out.vertices)
        midpoint: dict[tuple[int, int], int] = {}

        def mid(i: int, j: int) -> int:
            key = (i, j) if i < j else (j, i)
            if key not in midpoint:
                midpoint[key] = len(verts)
                verts.append(unit_vector(out.vertices[i] + out.vertices[j]))
            return midpoint[key]

        tris = []
        for a, b, c in out.triangles:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            tris.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
        out = TriMesh(np.array(verts), np.array(tris))
    return out


def submesh(mesh: TriMesh, keep) -> TriMesh:
    """Mesh restricted to the given triangle indices, unused vertices dropped."""
    keep = np.asarray(keep, dtype=np.int64)
    if keep.size == 0:
        raise PatchError("submesh with no triangles")
    tris = mesh.triangles[keep]
    used = np.unique(tris)
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriMesh(mesh.vertices[used], remap[tris])


def patch_extract(mesh: TriMesh, points, min_points_per_triangle: int = 1) -> TriMesh:
    """Extract the sub-triangulation supported by data.

    Keeps the triangles containing at least ``min_points_per_triangle`` of
    the given points (a point on a shared edge counts for every triangle
    containing it), then repeatedly drops triangles whose only connection to
    the rest of the kept set is a single vertex, which would otherwise pinch
    the domain.  Raises :class:`PatchError` when nothing survives.
    """
    if min_points_per_triangle < 1:
        raise PatchError("min_points_per_triangle must be at least 1")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    counts = np.zeros(mesh.n_triangles, dtype=np.int64)
    for lo in range(0, len(pts), 512):
        b = mesh.barycentric_all(pts[lo : lo + 512])
        counts += np.all(b >= -CONTAINMENT_TOL, axis=2).sum(axis=0)
    kept = set(np.nonzero(counts >= min_points_per_triangle)[0].tolist())
    if not kept:
        raise PatchError(
            f"no triangle contains {min_points_per_triangle} or more of the "
            f"{len(pts)} points"
        )

    changed = True
    while changed and len(kept) > 1:
        changed = False
        for t in sorted(kept):
            corners = set(mesh.triangles[t].tolist())
            shares_edge = False
            shares_vertex = False
            for other in kept:
                if other == t:
                    continue
                common = len(corners & set(mesh.triangles[other].tolist()))
                if common >= 2:
                    shares_edge = True
                    break
                if common == 1:
                    shares_vertex = True
            if shares_vertex and not shares_edge:
                kept.remove(t)
                changed = True
                break
    if not kept:
        raise PatchError("patch cleanup removed every triangle")
    return submesh(mesh, sorted(kept))


@dataclass(frozen=True)
class MeshStats:
    """Mesh size/shape summary.

    ``edge_lengths[t]`` is the longest geodesic edge of triangle t and
    ``inradii[t]`` the radius of its largest inscribed cap; ``size`` and
    ``min_inradius`` are the mesh-level max/min, and ``shape_ratio`` their
    quotient (always >= 2, asserted at construction).
    """

    n_triangles: int
    size: float
    min_inradius: float
    shape_ratio: float
    edge_lengths: np.ndarray = field(repr=False)
    inradii: np.ndarray = field(repr=False)


def mesh_stats(mesh: TriMesh) -> MeshStats:
    """Per-triangle and mesh-level size/shape statistics."""
    edges = np.zeros(mesh.n_triangles)
    radii = np.zeros(mesh.n_triangles)
    for t in range(mesh.n_triangles):
        tri = mesh.triangle(t)
        edges[t] = geometry.longest_edge(tri)
        radii[t] = geometry.incenter_inradius(tri)[1]
    ratios = edges / radii
    if np.any(ratios < 2.0 - 1e-12):
        raise MeshError(
            f"triangle {int(np.argmin(ratios))} has edge/inradius ratio "
            f"{ratios.min():.6f} < 2; mesh is malformed"
        )
    return MeshStats(
        n_triangles=mesh.n_triangles,
        size=float(edges.max()),
        min_inradius=float(radii.min()),
        shape_ratio=float(edges.max() / radii.min()),
        edge_lengths=edges,
        inradii=radii,
    )


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate`: structural counters plus a list of
    human-readable violations (empty when the mesh is well formed)."""

    n_vertices: int
    n_edges: int
    n_triangles: int
    n_boundary_edges: int
    euler_characteristic: int
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(mesh: TriMesh) -> ValidationReport:
    """Check the triangulation rules and report every violation found.

    Checks: duplicate vertices (closer than 1e-10), degenerate triangles,
    consistent counterclockwise orientation, each edge shared by at most two
    triangles with opposite traversal, and no vertex sitting in the interior
    of another triangle's edge (T-junction).
    """
    violations: list[str] = []

    tree = spatial.cKDTree(mesh.vertices)
    for i, j in sorted(tree.query_pairs(1e-10)):
        violations.append(f"vertices {i} and {j} coincide within 1e-10")

    for t in range(mesh.n_triangles):
        try:
            tri = mesh.triangle(t)
        except Exception as exc:  # degenerate -> GeometryError
            violations.append(f"triangle {t} is degenerate: {exc}")
            continue
        if tri.orientation <= 0:
            violations.append(
                f"triangle {t} is clockwise from outside (negative determinant)"
            )

    directed = {}
    for t, (a, b, c) in enumerate(mesh.triangles):
        for u, v in ((a, b), (b, c), (c, a)):
            key = (int(u), int(v))
            if key in directed:
                violations.append(
                    f"edge {key} traversed twice in the same direction by "
                    f"triangles {directed[key]} and {t}; orientation or "
                    "edge-sharing is inconsistent"
                )
            directed[key] = t
    for key, inc in sorted(mesh.edge_incidence.items()):
        if len(inc) > 2:
            violations.append(
                f"edge {key} is shared by {len(inc)} triangles: "
                f"{[t for t, _ in inc]}"
            )

    # T-junctions: a vertex in the open interior of someone else's edge.
    for key in sorted(mesh.edge_incidence):
        a, b = key
        va, vb = mesh.vertices[a], mesh.vertices[b]
        d = geometry.arc_distance(mesh.vertices, va, vb)
        on_edge = np.nonzero(d < 1e-9)[0]
        for v in on_edge:
            if v in (a, b):
                continue
            violations.append(
                f"vertex {int(v)} lies on the interior of edge {key} (T-junction)"
            )

    n_edges = len(mesh.edge_incidence)
    return ValidationReport(
        n_vertices=mesh.n_vertices,
        n_edges=n_edges,
        n_triangles=mesh.n_triangles,
        n_boundary_edges=len(mesh.boundary_edges),
        euler_characteristic=mesh.n_vertices - n_edges + mesh.n_triangles,
        violations=violations,
    )


def boundary_loops(mesh: TriMesh) -> list[list[int]]:
    """Ordered vertex loops along the mesh boundary (empty for closed
    surfaces).  Each loop follows the triangles' traversal direction."""
    directed = set()
    for a, b, c in mesh.triangles:
        directed.update(((int(a), int(b)), (int(b), int(c)), (int(c), int(a))))
    succ = {u: v for u, v in directed if (v, u) not in directed}
    loops = []
    remaining = dict(succ)
    while remaining:
        start = min(remaining)
        loop = [start]
        v = remaining.pop(start)
        while v != start:
            loop.append(v)
            v = remaining.pop(v)
        loops.append(loop)
    return loops


def mesh_to_dict(mesh: TriMesh) -> dict:
    return {
        "vertices": mesh.vertices.tolist(),
        "triangles": mesh.triangles.tolist(),
    }


def mesh_from_dict(data: dict) -> TriMesh:
    """Build a mesh from the JSON layout, re-normalizing vertices and
    rejecting invalid triangulations."""
    try:
        vertices = np.asarray(data["vertices"], dtype=float)
        triangles = np.asarray(data["triangles"], dtype=np.int64)
    except (KeyError, TypeError, ValueError) as exc:
        raise MeshError(f"malformed mesh data: {exc}") from exc
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise MeshError(f"mesh vertices must be (V, 3), got {vertices.shape}")
    mesh = TriMesh(unit_vector(vertices), triangles)
    report = validate(mesh)
    if not report.ok:
        raise MeshError(
            "invalid triangulation: " + "; ".join(report.violations[:5])
            + ("" if len(report.violations) <= 5 else
               f" (+{len(report.violations) - 5} more)")
        )
    return mesh


def save_mesh(mesh: TriMesh, path) -> None:
    with open(path, "w") as fh:
        json.dump(mesh_to_dict(mesh), fh)


def load_mesh(path) -> TriMesh:
    with open(path) as fh:
        return mesh_from_dict(json.load(fh))
