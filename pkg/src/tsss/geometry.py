"""Primitive geometry on the unit sphere S^2.

Conventions used throughout the package:

* points on the sphere are unit 3-vectors, stored as numpy arrays of shape
  ``(3,)`` or stacked as ``(n, 3)``;
* spherical coordinates are (theta, phi) with colatitude theta in [0, pi]
  measured from the +z pole and longitude phi, mapped by
  ``x = (sin(theta) cos(phi), sin(theta) sin(phi), cos(theta))``;
* a spherical triangle is the geodesic triangle spanned by three unit
  vertices that are linearly independent, which places it inside an open
  hemisphere.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GeometryError

__all__ = [
    "UNIT_TOL",
    "unit_vector",
    "sph_to_cart",
    "cart_to_sph",
    "geodesic_distance",
    "arc_distance",
    "SphericalTriangle",
    "SphericalCap",
    "spherical_barycentric",
    "triangle_area",
    "incenter_inradius",
    "longest_edge",
    "radial_project",
]

_DEGENERACY_TOL = 1e-12

# Input points are accepted as "on the sphere" when their Euclidean norm is
# within this tolerance of 1, then renormalized exactly.
UNIT_TOL = 1e-6


def unit_vector(v) -> np.ndarray:
    """Normalize ``v`` to unit length, rejecting (near-)zero input."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n < 1e-300):
        raise GeometryError("cannot normalize a zero vector")
    return v / n


def sph_to_cart(theta, phi) -> np.ndarray:
    """Map colatitude/longitude to unit vectors, stacked on the last axis."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def cart_to_sph(x) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`sph_to_cart`; phi is in (-pi, pi]."""
    x = np.asarray(x, dtype=float)
    theta = np.arccos(np.clip(x[..., 2], -1.0, 1.0))
    phi = np.arctan2(x[..., 1], x[..., 0])
    return theta, phi


def geodesic_distance(a, b) -> np.ndarray | float:
    """Great-circle distance between unit vectors (broadcasts over rows)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cross = np.cross(a, b)
    sin_d = np.linalg.norm(cross, axis=-1)
    cos_d = np.sum(a * b, axis=-1)
    return np.arctan2(sin_d, cos_d)


def arc_distance(p, a, b) -> np.ndarray | float:
    """Geodesic distance from point(s) ``p`` to the minor arc from a to b.

    Distance to the supporting great circle when the foot of the point lies
    on the arc, otherwise distance to the nearer endpoint.
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    pts = np.atleast_2d(p)
    n = unit_vector(np.cross(a, b))
    # Foot of each point on the supporting great circle.
    foot = pts - np.outer(pts @ n, n)
    foot_norm = np.linalg.norm(foot, axis=1)
    ok = foot_norm > 1e-14
    foot[ok] /= foot_norm[ok, None]
    # The foot lies on the minor arc iff it is on the arc side of both
    # endpoint meridians.
    on_arc = ok & (foot @ np.cross(n, a) >= 0.0) & (foot @ np.cross(b, n) >= 0.0)
    d_end = np.minimum(geodesic_distance(pts, a), geodesic_distance(pts, b))
    d_circ = np.abs(np.arcsin(np.clip(pts @ n, -1.0, 1.0)))
    out = np.where(on_arc, d_circ, d_end)
    return float(out[0]) if single else out


@dataclass(frozen=True, eq=False)
class SphericalTriangle:
    """Geodesic triangle spanned by three unit vertices (rows of a 3x3 array).

    The vertices must be linearly independent; the spanned triangle then lies
    in an open hemisphere automatically.
    """

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.shape != (3, 3):
            raise GeometryError(f"expected 3 vertices of length 3, got shape {v.shape}")
        if np.any(np.abs(np.linalg.norm(v, axis=1) - 1.0) > 1e-9):
            raise GeometryError("triangle vertices must be unit vectors")
        object.__setattr__(self, "vertices", v)
        if abs(np.linalg.det(v)) < _DEGENERACY_TOL:
            raise GeometryError(
                "degenerate spherical triangle: vertices are linearly dependent "
                "(collinear, repeated, or antipodal), so there is no open "
                "hemisphere containing a proper triangle"
            )

    @cached_property
    def coord_matrix(self) -> np.ndarray:
        """Matrix with the vertices as columns (maps barycentric to R^3)."""
        return self.vertices.T.copy()

    @cached_property
    def inverse(self) -> np.ndarray:
        """Inverse of :attr:`coord_matrix`; row kappa gives the linear
        functional x -> b_kappa(x)."""
        return np.linalg.inv(self.coord_matrix)

    @cached_property
    def orientation(self) -> float:
        """Sign of det([v1 v2 v3]); +1 when counterclockwise from outside."""
        return float(np.sign(np.linalg.det(self.vertices)))


@dataclass(frozen=True)
class SphericalCap:
    """Geodesic ball: all points within ``radius`` of a unit ``center``."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = unit_vector(self.center)
        object.__setattr__(self, "center", c)
        if not 0.0 <= self.radius <= np.pi:
            raise GeometryError(f"cap radius must be in [0, pi], got {self.radius}")

    def contains(self, p) -> np.ndarray | bool:
        d = geodesic_distance(np.asarray(p, dtype=float), self.center)
        return d <= self.radius


def bounding_cap(tri: SphericalTriangle, margin: float = 1e-9) -> SphericalCap:
    """Cap centered at the normalized vertex centroid covering the triangle."""
    c = unit_vector(tri.vertices.sum(axis=0))
    r = float(np.max(geodesic_distance(tri.vertices, c)))
    return SphericalCap(c, min(np.pi, r + margin))


def spherical_barycentric(tri: SphericalTriangle, p) -> np.ndarray:
    """Spherical barycentric coordinates of point(s) ``p`` w.r.t. ``tri``.

    The unique (b1, b2, b3) with ``p = b1 v1 + b2 v2 + b3 v3``; equivalently
    the ratios of signed tetrahedron volumes vol(p, v_j, v_k) / vol(v1, v2,
    v3).  All three are nonnegative exactly when ``p`` lies inside the
    triangle; the coordinates are well defined (and useful) outside it too.
    """
    p = np.asarray(p, dtype=float)
    return p @ tri.inverse.T


def triangle_area(tri: SphericalTriangle) -> float:
    """Spherical excess (Girard area) via L'Huilier's formula."""
    v = tri.vertices
    a = geodesic_distance(v[1], v[2])
    b = geodesic_distance(v[2], v[0])
    c = geodesic_distance(v[0], v[1])
    if min(a, b, c) < 1e-8:
        raise GeometryError(
            f"nearly degenerate triangle: shortest edge {min(a, b, c):.3e} < 1e-8"
        )
    s = 0.5 * (a + b + c)
    t = (
        np.tan(0.5 * s)
        * np.tan(0.5 * (s - a))
        * np.tan(0.5 * (s - b))
        * np.tan(0.5 * (s - c))
    )
    return float(4.0 * np.arctan(np.sqrt(max(t, 0.0))))


def incenter_inradius(tri: SphericalTriangle) -> tuple[np.ndarray, float]:
    """Center and geodesic radius of the largest inscribed cap.

    The incenter is the point equidistant from the three edge great circles;
    with inward edge-plane normals n_e it solves n_e . p = sin(rho) for all
    three edges simultaneously.
    """
    v = tri.vertices
    sign = tri.orientation
    normals = np.stack(
        [
            sign * unit_vector(np.cross(v[0], v[1])),
            sign * unit_vector(np.cross(v[1], v[2])),
            sign * unit_vector(np.cross(v[2], v[0])),
        ]
    )
    p = unit_vector(np.linalg.solve(normals, np.ones(3)))
    sines = normals @ p
    if np.any(sines <= 0.0):
        p = -p
        sines = -sines
    radius = float(np.arcsin(np.clip(sines.min(), -1.0, 1.0)))
    return p, radius


def longest_edge(tri: SphericalTriangle) -> float:
    """Length of the longest geodesic edge."""
    v = tri.vertices
    return float(
        max(
            geodesic_distance(v[0], v[1]),
            geodesic_distance(v[1], v[2]),
            geodesic_distance(v[2], v[0]),
        )
    )


def plane_offset(tri: SphericalTriangle) -> tuple[np.ndarray, float]:
    """Unit normal of the plane through the vertices and its distance h > 0
    from the origin."""
    v = tri.vertices
    n = unit_vector(np.cross(v[1] - v[0], v[2] - v[0]))
    h = float(n @ v[0])
    if h < 0:
        n, h = -n, -h
    if h < _DEGENERACY_TOL:
        raise GeometryError("vertex plane passes through the origin")
    return n, h


def radial_project(tri: SphericalTriangle, p_plane) -> tuple[np.ndarray, np.ndarray]:
    """Project point(s) of the flat vertex-plane triangle onto the sphere.

    For u in the plane through the vertices, returns ``(u / |u|, h / |u|^3)``
    where h is the plane's distance from the origin.  The second value is the
    area element ratio: integrating f over the spherical triangle equals
    integrating ``f(u/|u|) * h/|u|^3`` over the flat triangle.
    """
    _, h = plane_offset(tri)
    u = np.asarray(p_plane, dtype=float)
    norms = np.linalg.norm(u, axis=-1)
    if np.any(norms < _DEGENERACY_TOL):
        raise GeometryError("cannot project a point at the origin")
    x = u / norms[..., None]
    jac = h / norms**3
    return x, jac
