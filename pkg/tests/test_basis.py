import math

import numpy as np
import pytest

from tsss.basis import (
    BasisLayout,
    bernstein_from_barycentric,
    domain_points,
    eval_basis,
    eval_extension,
    eval_spline,
    gradient_extended,
    index_position,
    multi_indices,
    multinomial_coefficients,
    n_basis,
    second_derivatives_extended,
    triangle_interpolant,
)
from tsss.errors import ConfigurationError, LocationError
from tsss.geometry import SphericalTriangle, unit_vector
from tsss.mesh import base_mesh, locate, submesh


def octant():
    return SphericalTriangle(np.eye(3))


def points_in_octant(rng, n, radial=False):
    pts = unit_vector(np.abs(rng.standard_normal((n, 3))) + 0.05)
    if radial:
        pts = pts * rng.uniform(0.7, 1.3, n)[:, None]
    return pts


def test_n_basis_counts():
    assert [n_basis(d) for d in range(6)] == [1, 3, 6, 10, 15, 21]


def test_multi_indices_order_and_sums():
    for d in range(6):
        exps = multi_indices(d)
        assert exps.shape == (n_basis(d), 3)
        assert np.all(exps.sum(axis=1) == d)
        assert tuple(exps[0]) == (d, 0, 0)
        assert tuple(exps[-1]) == (0, 0, d)
        # index_position inverts the row order.
        for pos, ijk in enumerate(exps):
            assert index_position(d, tuple(ijk)) == pos


def test_multinomial_coefficients_sum():
    for d in range(7):
        coef = multinomial_coefficients(d)
        exps = multi_indices(d)
        expected = [
            math.factorial(d)
            // (math.factorial(i) * math.factorial(j) * math.factorial(k))
            for i, j, k in exps
        ]
        assert np.array_equal(coef, expected)
        # Multinomial theorem: sum of all coefficients is 3^d.
        assert coef.sum() == 3**d


def test_layout_arithmetic():
    layout = BasisLayout(3, 8)
    assert layout.block_size == 10
    assert layout.width == 80
    assert layout.block(2) == slice(20, 30)
    assert layout.column(2, (3, 0, 0)) == 20
    assert layout.column(2, (0, 0, 3)) == 29


def test_bernstein_binomial_sum():
    # Sum of all Bernstein values equals (b1 + b2 + b3)^d.
    rng = np.random.default_rng(10)
    b = rng.uniform(-0.5, 1.5, (40, 3))
    for d in range(5):
        vals = bernstein_from_barycentric(b, d)
        assert np.allclose(vals.sum(axis=1), b.sum(axis=1) ** d, rtol=1e-12)


def test_eval_basis_partition_on_sphere():
    rng = np.random.default_rng(11)
    tri = octant()
    pts = points_in_octant(rng, 30)
    from tsss.geometry import spherical_barycentric

    bary = spherical_barycentric(tri, pts)
    vals = eval_basis(tri, 3, pts)
    assert np.allclose(vals.sum(axis=1), bary.sum(axis=1) ** 3, rtol=1e-12)


def test_domain_points_layout():
    tri = octant()
    d = 3
    pts = domain_points(tri, d)
    assert pts.shape == (10, 3)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-14)
    # Corner domain points coincide with the vertices.
    assert np.allclose(pts[index_position(d, (3, 0, 0))], tri.vertices[0])
    assert np.allclose(pts[index_position(d, (0, 3, 0))], tri.vertices[1])
    assert np.allclose(pts[index_position(d, (0, 0, 3))], tri.vertices[2])
    # Degree zero: single point at the normalized centroid.
    assert domain_points(tri, 0).shape == (1, 3)


def test_triangle_interpolant_reproduces_polynomial_restrictions():
    # The restriction of a homogeneous polynomial (a.x)^d to the sphere lies
    # in the degree-d space, so interpolation at the domain points is exact
    # everywhere on the triangle.
    rng = np.random.default_rng(12)
    tri = octant()
    for d in (1, 2, 3, 4):
        a = rng.standard_normal(3)
        f = lambda x: (x @ a) ** d
        gamma = triangle_interpolant(tri, d, f(domain_points(tri, d)))
        pts = points_in_octant(rng, 50)
        assert np.allclose(eval_basis(tri, d, pts) @ gamma, f(pts), atol=1e-10)


def test_eval_extension_homogeneity():
    # F(t x) = t^p F(x) for the degree-p extension.
    rng = np.random.default_rng(13)
    tri = octant()
    pts = points_in_octant(rng, 20)
    for d, p in ((3, 1), (2, 0), (4, 2), (3, 3)):
        base = eval_extension(tri, d, p, pts)
        scaled = eval_extension(tri, d, p, 2.5 * pts)
        assert np.allclose(scaled, base * 2.5**p, rtol=1e-12)
        # On the sphere the extension agrees with the basis itself.
        assert np.allclose(eval_extension(tri, d, p, pts), eval_basis(tri, d, pts))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(14)
    tri = octant()
    pts = points_in_octant(rng, 8, radial=True)
    h = 1e-6
    for d, p in ((2, 0), (3, 1), (3, 3)):
        grad = gradient_extended(tri, d, p, pts)
        assert grad.shape == (8, 3, n_basis(d))
        for axis in range(3):
            e = np.zeros(3)
            e[axis] = h
            fd = (
                eval_extension(tri, d, p, pts + e)
                - eval_extension(tri, d, p, pts - e)
            ) / (2 * h)
            assert np.max(np.abs(grad[:, axis, :] - fd)) < 5e-9


def test_gradient_euler_identity():
    # x . grad F = p F for a degree-p homogeneous function; holds exactly.
    rng = np.random.default_rng(15)
    tri = octant()
    pts = points_in_octant(rng, 20, radial=True)
    for d, p in ((2, 0), (3, 1)):
        vals = eval_extension(tri, d, p, pts)
        grad = gradient_extended(tri, d, p, pts)
        radial = np.einsum("na,nam->nm", pts, grad)
        assert np.max(np.abs(radial - p * vals)) < 1e-10


def test_second_derivatives_match_finite_differences():
    rng = np.random.default_rng(16)
    tri = octant()
    pts = points_in_octant(rng, 5, radial=True)
    h = 1e-4
    pair_axes = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]
    for d, p in ((2, 0), (3, 1), (5, 1)):
        hess = second_derivatives_extended(tri, d, p, pts)
        assert hess.shape == (5, 6, n_basis(d))
        for slot, (a, b) in enumerate(pair_axes):
            ea, eb = np.zeros(3), np.zeros(3)
            ea[a] = h
            eb[b] = h
            fd = (
                eval_extension(tri, d, p, pts + ea + eb)
                - eval_extension(tri, d, p, pts + ea - eb)
                - eval_extension(tri, d, p, pts - ea + eb)
                + eval_extension(tri, d, p, pts - ea - eb)
            ) / (4 * h * h)
            assert np.max(np.abs(hess[:, slot, :] - fd)) < 5e-6


def test_second_derivatives_homogeneity_identity():
    # Twice-applied Euler identity: x^T H x = p (p - 1) F, zero for p in {0, 1}.
    rng = np.random.default_rng(17)
    tri = octant()
    pts = points_in_octant(rng, 20, radial=True)
    for d, p in ((2, 0), (3, 1)):
        hess = second_derivatives_extended(tri, d, p, pts)
        full = np.empty((len(pts), 3, 3, hess.shape[2]))
        for slot, (a, b) in enumerate([(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]):
            full[:, a, b] = hess[:, slot]
            full[:, b, a] = hess[:, slot]
        quad = np.einsum("na,nabm,nb->nm", pts, full, pts)
        assert np.max(np.abs(quad)) < 1e-9  # p (p - 1) F vanishes for p in {0, 1}


def test_second_derivatives_reject_unsupported_parity():
    with pytest.raises(ConfigurationError):
        second_derivatives_extended(octant(), 3, 2, np.array([[1.0, 0.0, 0.0]]))


def test_eval_spline_matches_blockwise_evaluation():
    rng = np.random.default_rng(18)
    mesh = base_mesh("octahedron")
    layout = BasisLayout(2, mesh.n_triangles)
    gamma = rng.standard_normal(layout.width)
    pts = unit_vector(rng.standard_normal((100, 3)))
    out = eval_spline(mesh, layout, gamma, pts)
    for k in range(0, 100, 13):
        t, _ = locate(mesh, pts[k])
        direct = eval_basis(mesh.triangle(t), 2, pts[k]) @ gamma[layout.block(t)]
        assert np.isclose(out[k], direct, rtol=1e-12)
    # Single-point calls return a scalar-shaped array.
    assert np.ndim(eval_spline(mesh, layout, gamma, pts[0])) == 0


def test_eval_spline_outside_mesh():
    rng = np.random.default_rng(19)
    patch = submesh(base_mesh("octahedron"), [0])
    layout = BasisLayout(2, 1)
    gamma = rng.standard_normal(layout.width)
    south = np.array([[0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
    south = unit_vector(south)
    with pytest.raises(LocationError):
        eval_spline(patch, layout, gamma, south)
    out = eval_spline(patch, layout, gamma, south, on_missing="nan")
    assert np.isnan(out[0]) and np.isfinite(out[1])


def test_eval_spline_rejects_mismatched_sizes():
    mesh = base_mesh("octahedron")
    layout = BasisLayout(2, mesh.n_triangles)
    with pytest.raises(ConfigurationError):
        eval_spline(mesh, layout, np.zeros(layout.width - 1), np.eye(3))
    with pytest.raises(ConfigurationError):
        eval_spline(mesh, BasisLayout(2, 4), np.zeros(24), np.eye(3))
