"""Spherical Bernstein-Bezier (SBB) bases on triangulations.

For a spherical triangle with vertices v1, v2, v3 and spherical barycentric
coordinates b = (b1, b2, b3), the degree-d basis functions are

    B_ijk(x) = d!/(i! j! k!) * b1(x)^i b2(x)^j b3(x)^k,    i + j + k = d,

giving (d+1)(d+2)/2 functions per triangle.  Because each b_kappa is a
*linear* functional of x in R^3, B_ijk extends off the sphere as a
homogeneous polynomial of degree d; the roughness energy works with the
degree-p homogeneous extension ``|x|^(p-d) B_ijk(x)`` where p is d mod 2.

Multi-indices are enumerated in the fixed order (d,0,0), (d-1,1,0),
(d-1,0,1), ..., (0,0,d): the first index descending, then the second.
A piecewise spline stores one coefficient block of length (d+1)(d+2)/2 per
triangle, concatenated in triangle order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, LocationError
from .geometry import SphericalTriangle, unit_vector
from .mesh import TriMesh, locate_many

__all__ = [
    "MAX_DEGREE",
    "n_basis",
    "multi_indices",
    "multinomial_coefficients",
    "BasisLayout",
    "eval_basis",
    "bernstein_from_barycentric",
    "domain_points",
    "triangle_interpolant",
    "eval_spline",
    "eval_extension",
    "second_derivatives_extended",
]

#: Largest supported polynomial degree; multinomial coefficients up to this
#: degree are exact in double precision (they are exact integers well below
#: 2^53).
MAX_DEGREE = 12


def check_degree(d: int, minimum: int = 0) -> int:
    """Validate a polynomial degree.  Degree 0 (one constant per triangle) is
    a valid basis; model-level configuration enforces its own lower bound."""
    if not isinstance(d, (int, np.integer)) or isinstance(d, bool):
        raise ConfigurationError(f"degree must be an integer, got {d!r}")
    if not minimum <= d <= MAX_DEGREE:
        raise ConfigurationError(
            f"degree must be between {minimum} and {MAX_DEGREE}, got {int(d)}"
        )
    return int(d)


def n_basis(d: int) -> int:
    """Number of degree-d basis functions per triangle, (d+1)(d+2)/2."""
    d = check_degree(d)
    return (d + 1) * (d + 2) // 2


@lru_cache(maxsize=None)
def _index_tables(d: int) -> tuple[np.ndarray, np.ndarray, dict[tuple[int, int, int], int]]:
    exps = []
    for i in range(d, -1, -1):
        for j in range(d - i, -1, -1):
            exps.append((i, j, d - i - j))
    exps_arr = np.array(exps, dtype=np.int64)
    coefs = np.array(
        [
            math.factorial(d) // (math.factorial(i) * math.factorial(j) * math.factorial(k))
            for i, j, k in exps
        ],
        dtype=float,
    )
    position = {ijk: a for a, ijk in enumerate(exps)}
    return exps_arr, coefs, position


def multi_indices(d: int) -> np.ndarray:
    """All (i, j, k) with i+j+k = d in enumeration order, shape (m, 3)."""
    check_degree(d)
    return _index_tables(d)[0].copy()


def multinomial_coefficients(d: int) -> np.ndarray:
    """d!/(i!j!k!) for each multi-index, in enumeration order."""
    check_degree(d)
    return _index_tables(d)[1].copy()


def index_position(d: int, ijk: tuple[int, int, int]) -> int:
    """Position of a multi-index in the enumeration order."""
    check_degree(d)
    return _index_tables(d)[2][tuple(int(v) for v in ijk)]


@dataclass(frozen=True)
class BasisLayout:
    """Column layout of a piecewise spline coefficient vector: triangle t
    owns the contiguous block ``[t*m, (t+1)*m)`` with m = (d+1)(d+2)/2."""

    degree: int
    n_triangles: int

    def __post_init__(self):
        check_degree(self.degree)
        if self.n_triangles < 1:
            raise ConfigurationError("layout needs at least one triangle")

    @property
    def block_size(self) -> int:
        return n_basis(self.degree)

    @property
    def width(self) -> int:
        return self.n_triangles * self.block_size

    def block(self, t: int) -> slice:
        return slice(t * self.block_size, (t + 1) * self.block_size)

    def column(self, t: int, ijk: tuple[int, int, int]) -> int:
        return t * self.block_size + index_position(self.degree, ijk)


def bernstein_from_barycentric(bary, d: int) -> np.ndarray:
    """Degree-d Bernstein values given barycentric coordinates (n, 3) or (3,).

    Valid for any real coordinates, so it also serves evaluation outside the
    triangle (used by the cross-edge smoothness conditions).
    """
    exps, coefs, _ = _index_tables(check_degree(d))
    b = np.asarray(bary, dtype=float)
    single = b.ndim == 1
    b = np.atleast_2d(b)
    vals = coefs * np.prod(b[:, None, :] ** exps[None, :, :], axis=2)
    return vals[0] if single else vals


def eval_basis(tri: SphericalTriangle, d: int, x) -> np.ndarray:
    """All degree-d SBB values at point(s) ``x`` on the sphere, w.r.t. ``tri``.

    Shape (m,) for a single point, (n, m) for stacked points.  Evaluation at
    points outside the triangle is permitted (the barycentric coordinates
    just leave [0, 1]).
    """
    x = np.asarray(x, dtype=float)
    return bernstein_from_barycentric(x @ tri.inverse.T, d)


def domain_points(tri: SphericalTriangle, d: int) -> np.ndarray:
    """Radial projections of the Bezier net, ((i v1 + j v2 + k v3)/d
    normalized), in multi-index order; shape (m, 3).  Degree 0 uses the
    triangle centroid."""
    if d == 0:
        return unit_vector(tri.vertices.mean(axis=0))[None, :]
    exps = multi_indices(d)
    return unit_vector(exps @ tri.vertices / float(d))


def triangle_interpolant(tri: SphericalTriangle, d: int, values) -> np.ndarray:
    """Coefficients of the degree-d SBB interpolant matching the given values
    at the domain points of ``tri``."""
    a = eval_basis(tri, d, domain_points(tri, d))
    return np.linalg.solve(a, np.asarray(values, dtype=float))


def eval_spline(mesh: TriMesh, layout: BasisLayout, coefficients, x,
                on_missing: str = "raise") -> np.ndarray:
    """Evaluate a piecewise spline at point(s) ``x``.

    On shared edges the evaluation uses the lowest-index containing triangle;
    when the coefficients satisfy the continuity constraints the choice does
    not matter.  Points outside the mesh raise :class:`LocationError` unless
    ``on_missing="nan"``.
    """
    if layout.n_triangles != mesh.n_triangles:
        raise ConfigurationError("layout does not match the mesh")
    gamma = np.asarray(coefficients, dtype=float)
    if gamma.shape != (layout.width,):
        raise ConfigurationError(
            f"expected {layout.width} coefficients, got shape {gamma.shape}"
        )
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    idx, bary = locate_many(mesh, pts)
    missing = idx < 0
    if missing.any():
        if on_missing != "nan":
            raise LocationError(
                f"{int(missing.sum())} of {len(pts)} points lie outside the mesh "
                f"(first: index {int(np.nonzero(missing)[0][0])})"
            )
        idx = idx.copy()
        idx[missing] = 0
    vals = bernstein_from_barycentric(bary, layout.degree)
    blocks = gamma.reshape(layout.n_triangles, layout.block_size)
    out = np.sum(vals * blocks[idx], axis=1)
    if missing.any():
        out[missing] = np.nan
    return out[0] if single else out


def eval_extension(tri: SphericalTriangle, d: int, p: int, x) -> np.ndarray:
    """Degree-p homogeneous extensions ``|x|^(p-d) B_ijk(x)`` at arbitrary
    nonzero x in R^3 (not necessarily unit).  Shape (m,) or (n, m)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    t = pts @ tri.inverse.T
    vals = bernstein_from_barycentric(t, d)
    r = np.linalg.norm(pts, axis=1)
    vals = vals * (r ** (p - d))[:, None]
    return vals[0] if single else vals


def gradient_extended(tri: SphericalTriangle, d: int, p: int, x) -> np.ndarray:
    """First partials of the extended basis functions F = |x|^(p-d) B_ijk.

    Shape (3, m) for one point, (n, 3, m) for stacked points.
    """
    check_degree(d)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    n = len(pts)
    exps, coefs, _ = _index_tables(d)
    m = len(exps)
    ell = tri.inverse
    t = pts @ ell.T
    pw = np.ones((n, 3, d + 2))
    for q in range(1, d + 1):
        pw[:, :, q + 1] = pw[:, :, q] * t
    pw[:, :, 0] = 0.0

    r2 = np.sum(pts * pts, axis=1)
    mu = p - d
    r_mu = r2 ** (mu / 2.0)
    r_mu2 = r2 ** (mu / 2.0 - 1.0)

    out = np.empty((n, 3, m))
    for a_idx in range(m):
        i, j, k = (int(v) for v in exps[a_idx])
        c = coefs[a_idx]
        q0 = c * pw[:, 0, i + 1] * pw[:, 1, j + 1] * pw[:, 2, k + 1]
        gq = np.zeros((n, 3))
        for kappa, (e, shift) in enumerate(
            ((i, (i - 1, j, k)), (j, (i, j - 1, k)), (k, (i, j, k - 1)))
        ):
            if e:
                term = c * e * pw[:, 0, shift[0] + 1] * pw[:, 1, shift[1] + 1] * pw[:, 2, shift[2] + 1]
                gq += term[:, None] * ell[kappa]
        out[:, :, a_idx] = (mu * r_mu2 * q0)[:, None] * pts + r_mu[:, None] * gq
    return out[0] if single else out


def second_derivatives_extended(tri: SphericalTriangle, d: int, p: int, x) -> np.ndarray:
    """All second partials of the extended basis functions.

    For F(x) = |x|^(p-d) B_ijk(x) returns D^alpha F over the six
    second-order multi-indices in the order (xx, yy, zz, xy, xz, yz);
    shape (6, m) for one point, (n, 6, m) for stacked points.  The
    derivatives are exact: B_ijk is a product of powers of the linear
    functionals b_kappa(x) = l_kappa . x, differentiated by the product
    rule against the radial factor.
    """
    check_degree(d)
    if p not in (0, 1):
        raise ConfigurationError(f"homogeneity degree p must be 0 or 1, got {p}")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    n = len(pts)
    exps, coefs, _ = _index_tables(d)
    m = len(exps)
    ell = tri.inverse                         # rows l_kappa
    t = pts @ ell.T                           # (n, 3) linear coordinates

    # Power table pw[:, kappa, q] = t_kappa^q, with the q = -1, -2 cases
    # handled by zero padding at the front.
    pw = np.ones((n, 3, d + 3))
    for q in range(1, d + 1):
        pw[:, :, q + 2] = pw[:, :, q + 1] * t
    pw[:, :, 0] = 0.0
    pw[:, :, 1] = 0.0

    def power_product(e1: int, e2: int, e3: int) -> np.ndarray:
        return pw[:, 0, e1 + 2] * pw[:, 1, e2 + 2] * pw[:, 2, e3 + 2]

    r2 = np.sum(pts * pts, axis=1)
    mu = p - d                                 # radial exponent
    r_mu = r2 ** (mu / 2.0)
    r_mu2 = r2 ** (mu / 2.0 - 1.0)
    r_mu4 = r2 ** (mu / 2.0 - 2.0)

    # Second partials of |x|^mu: mu(mu-2) r^(mu-4) x_a x_b + mu r^(mu-2) d_ab.
    pairs = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
    d2r = np.empty((n, 6))
    d1r = mu * r_mu2[:, None] * pts            # (n, 3) gradient of |x|^mu
    for col, (a, b) in enumerate(pairs):
        d2r[:, col] = mu * (mu - 2.0) * r_mu4 * pts[:, a] * pts[:, b]
        if a == b:
            d2r[:, col] += mu * r_mu2

    out = np.empty((n, 6, m))
    for a_idx in range(m):
        i, j, k = (int(v) for v in exps[a_idx])
        c = coefs[a_idx]
        q0 = c * power_product(i, j, k)
        # Gradient of the polynomial factor.
        gq = np.zeros((n, 3))
        for kappa, (e, shift) in enumerate(
            ((i, (i - 1, j, k)), (j, (i, j - 1, k)), (k, (i, j, k - 1)))
        ):
            if e:
                gq += (c * e) * power_product(*shift)[:, None] * ell[kappa]
        # Hessian of the polynomial factor, then combine with the radial part.
        for col, (a, b) in enumerate(pairs):
            hq = np.zeros(n)
            for kappa, e in enumerate((i, j, k)):
                if e >= 2:
                    sh = [i, j, k]
                    sh[kappa] -= 2
                    hq += c * e * (e - 1) * power_product(*sh) * ell[kappa, a] * ell[kappa, b]
            for k1 in range(3):
                for k2 in range(k1 + 1, 3):
                    e1, e2 = (i, j, k)[k1], (i, j, k)[k2]
                    if e1 and e2:
                        sh = [i, j, k]
                        sh[k1] -= 1
                        sh[k2] -= 1
                        hq += (
                            c * e1 * e2 * power_product(*sh)
                            * (ell[k1, a] * ell[k2, b] + ell[k2, a] * ell[k1, b])
                        )
            out[:, col, a_idx] = (
                d2r[:, col] * q0
                + d1r[:, a] * gq[:, b]
                + d1r[:, b] * gq[:, a]
                + r_mu * hq
            )
    return out[0] if single else out
