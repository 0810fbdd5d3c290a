"""Quadrature on spherical triangles and roughness-penalty assembly.

The roughness energy of a spline s is E(s) = integral over the domain of
sum_{|alpha|=2} (D^alpha s_p)^2, where s_p is the homogeneous extension of
s of degree p (p = degree mod 2) and alpha ranges over the six second-order
multi-indices (each counted once).  Because the integrand couples only
coefficients of one triangle, the penalty matrix P with
gamma' P gamma = E(s) is block diagonal with one square block per triangle.

Integrals over a spherical triangle are pulled back to the planar triangle
through its vertices by radial projection (surface Jacobian h / |u|^3 with
h the plane's distance from the origin), evaluated with a symmetric Gauss
rule, and refined by adaptive four-way subdivision: the integrand carries
rational powers of |u|, so a fixed polynomial rule alone is not exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .basis import check_degree, n_basis, second_derivatives_extended
from .errors import ConfigurationError
from .geometry import SphericalTriangle, unit_vector
from .mesh import TriMesh
from .smoothness import model_degrees

__all__ = [
    "QuadratureRule",
    "triangle_rule",
    "integrate_triangle",
    "PenaltyMatrix",
    "assemble_penalty",
    "model_penalty",
]

#: Relative tolerance for accepting an adaptive refinement step.
DEFAULT_REL_TOL = 1e-10

#: Maximum adaptive subdivision depth.
MAX_DEPTH = 6


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature nodes in barycentric coordinates on a reference triangle.

    Weights are normalized to sum to 1 (unit reference area); applying the
    rule multiplies by the actual triangle area.  ``order`` is the largest
    total polynomial degree the rule integrates exactly.
    """

    points: np.ndarray
    weights: np.ndarray
    order: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        wts = np.asarray(self.weights, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) != len(wts):
            raise ConfigurationError("quadrature points must be (q, 3) with q weights")
        if np.any(wts <= 0):
            raise ConfigurationError("quadrature weights must be positive")
        if abs(wts.sum() - 1.0) > 1e-12:
            raise ConfigurationError("quadrature weights must sum to 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)


def triangle_rule(order: int) -> QuadratureRule:
    """Symmetric positive rule on the reference triangle, exact for all
    polynomials of total degree <= ``order``.

    Built from a tensor Gauss-Legendre rule under the Duffy map
    (x, y) = (u, v(1-u)) (the extra 1-u factor raises the u-degree by one),
    then averaged over the three cyclic vertex rotations, which restores
    symmetry without changing exactness.
    """
    if order < 0:
        raise ConfigurationError("quadrature order must be nonnegative")
    n1 = max(1, (order + 2 + 1) // 2)
    nodes, wts = np.polynomial.legendre.leggauss(n1)
    u = 0.5 * (nodes + 1.0)
    wu = 0.5 * wts
    uu, vv = np.meshgrid(u, u, indexing="ij")
    ww = np.outer(wu * (1.0 - u), wu).ravel()
    x = uu.ravel()
    y = (vv * (1.0 - uu)).ravel()
    bary = np.column_stack([1.0 - x - y, x, y])
    weights = ww / ww.sum()
    pts = np.concatenate([bary, bary[:, [1, 2, 0]], bary[:, [2, 0, 1]]])
    wts3 = np.concatenate([weights, weights, weights]) / 3.0
    return QuadratureRule(points=pts, weights=wts3, order=int(order))


def _panel_estimate(f, v1, v2, v3, rule: QuadratureRule):
    """One-panel estimate of the surface integral over the spherical triangle
    whose planar chord triangle is <v1, v2, v3>: the rule is applied to the
    chord triangle and pushed to the sphere with the radial-projection
    Jacobian h / |u|^3 (h = distance of the chord plane from the origin)."""
    normal = np.cross(v2 - v1, v3 - v1)
    two_area = np.linalg.norm(normal)
    h = abs(normal @ v1) / two_area
    planar = rule.points @ np.array([v1, v2, v3])
    norms = np.linalg.norm(planar, axis=1)
    pts = planar / norms[:, None]
    jac = h / norms**3
    vals = np.asarray(f(pts), dtype=float)
    scale = rule.weights * jac * (0.5 * two_area)
    return np.tensordot(scale, vals, axes=(0, 0))


def integrate_triangle(f, tri: SphericalTriangle, rule: QuadratureRule,
                       rel_tol: float = DEFAULT_REL_TOL,
                       max_depth: int = MAX_DEPTH):
    """Integrate ``f`` over a spherical triangle against surface measure.

    ``f`` maps stacked unit vectors (q, 3) to values of shape (q, ...); the
    result has shape (...), so matrix-valued integrands are supported.  The
    rule is applied on the planar chord triangle with the radial-projection
    Jacobian; panels are split four ways at the arc midpoints until the
    parent and children estimates agree to ``rel_tol`` (relative) or
    ``max_depth`` splits have been made.
    """
    def recurse(v1, v2, v3, est, depth):
        m12 = unit_vector(v1 + v2)
        m23 = unit_vector(v2 + v3)
        m31 = unit_vector(v3 + v1)
        corners = ((v1, m12, m31), (m12, v2, m23), (m31, m23, v3), (m12, m23, m31))
        parts = [_panel_estimate(f, *c, rule) for c in corners]
        total = sum(parts)
        err = np.max(np.abs(total - est))
        scale = max(np.max(np.abs(total)), 1e-30)
        if depth >= max_depth or err <= rel_tol * scale:
            return total
        return sum(
            recurse(*c, p, depth + 1) for c, p in zip(corners, parts)
        )

    v1, v2, v3 = tri.vertices
    first = _panel_estimate(f, v1, v2, v3, rule)
    return recurse(v1, v2, v3, first, 1)


@dataclass(frozen=True)
class PenaltyMatrix:
    """Symmetric PSD roughness penalty with one coupled block per triangle.

    Rows and columns follow the coefficient layout (all degree-d blocks,
    then all degree-(d-1) blocks for the mixed model).  The mixed-model
    energy extends every basis function with the same homogeneity degree
    p = d mod 2, so the per-triangle blocks couple the two components.
    """

    matrix: sp.csr_matrix
    degrees: tuple[int, ...]
    parities: tuple[int, ...]

    @property
    def width(self) -> int:
        return int(self.matrix.shape[0])

    def quad_form(self, gamma) -> float:
        gamma = np.asarray(gamma, dtype=float)
        return float(gamma @ (self.matrix @ gamma))


def _triangle_block(tri: SphericalTriangle, d: int, p: int,
                    rule: QuadratureRule, rel_tol: float) -> np.ndarray:
    m = n_basis(d) if d >= 1 else 1

    def integrand(pts):
        h = second_derivatives_extended(tri, d, p, pts)
        return np.einsum("qam,qan->qmn", h, h)

    block = integrate_triangle(integrand, tri, rule, rel_tol=rel_tol)
    block = np.atleast_2d(block).reshape(m, m)
    return 0.5 * (block + block.T)


def assemble_penalty(mesh: TriMesh, d: int, p: int | None = None,
                     rel_tol: float = DEFAULT_REL_TOL) -> PenaltyMatrix:
    """Penalty matrix of the single degree-d space on ``mesh``.

    The extension degree defaults to p = d mod 2 and may be overridden with
    the other parity; the energy is a valid roughness measure for any fixed
    homogeneity degree.
    """
    d = check_degree(d)
    if p is None:
        p = d % 2
    if p not in (0, 1):
        raise ConfigurationError(f"extension parity p must be 0 or 1, got {p!r}")
    rule = triangle_rule(2 * (d + 2))
    blocks = [
        _triangle_block(mesh.triangle(t), d, p, rule, rel_tol)
        for t in range(mesh.n_triangles)
    ]
    matrix = sp.block_diag(blocks, format="csr")
    return PenaltyMatrix(matrix=matrix, degrees=(d,), parities=(int(p),))


def model_penalty(mesh: TriMesh, d: int,
                  rel_tol: float = DEFAULT_REL_TOL) -> PenaltyMatrix:
    """Penalty of the mixed degree-d model.

    Every basis function of both components is extended off the sphere with
    the same homogeneity degree p = d mod 2, and the energy of the summed
    model function is assembled over the stacked basis.  The per-triangle
    blocks therefore carry cross terms between the degree-d and
    degree-(d-1) components; the block entries are scattered into the
    component-major coefficient layout.  With a shared parity the penalty
    kernel depends on d: linear functions for odd d, constants for even d,
    which separates neighbouring model degrees under cross validation.
    """
    degrees = model_degrees(d)
    p = d % 2
    sizes = [n_basis(dc) if dc >= 1 else 1 for dc in degrees]
    total = sum(sizes)
    n_tri = mesh.n_triangles
    offsets = np.concatenate(([0], np.cumsum([s * n_tri for s in sizes])))
    rule = triangle_rule(2 * (d + 2))
    rows = np.empty(n_tri * total * total, dtype=np.int64)
    cols = np.empty_like(rows)
    vals = np.empty(n_tri * total * total, dtype=float)
    for t in range(n_tri):
        tri = mesh.triangle(t)

        def integrand(pts):
            parts = [second_derivatives_extended(tri, dc, p, pts)
                     for dc in degrees]
            h = np.concatenate(parts, axis=2)
            return np.einsum("qam,qan->qmn", h, h)

        block = integrate_triangle(integrand, tri, rule, rel_tol=rel_tol)
        block = np.atleast_2d(block).reshape(total, total)
        block = 0.5 * (block + block.T)
        idx = np.concatenate([off + t * s + np.arange(s)
                              for s, off in zip(sizes, offsets[:-1])])
        rr, cc = np.meshgrid(idx, idx, indexing="ij")
        base = t * total * total
        rows[base:base + total * total] = rr.ravel()
        cols[base:base + total * total] = cc.ravel()
        vals[base:base + total * total] = block.ravel()
    width = int(offsets[-1])
    matrix = sp.coo_matrix((vals, (rows, cols)), shape=(width, width)).tocsr()
    return PenaltyMatrix(matrix=matrix, degrees=degrees, parities=(p, p))
