import math

import numpy as np
import pytest

from tsss.basis import BasisLayout, domain_points, multi_indices, n_basis, triangle_interpolant
from tsss.energy import (
    QuadratureRule,
    assemble_penalty,
    integrate_triangle,
    model_penalty,
    triangle_rule,
)
from tsss.errors import ConfigurationError
from tsss.geometry import SphericalTriangle
from tsss.mesh import base_mesh


def octant():
    return SphericalTriangle(np.eye(3))


def interpolate_function(mesh, d, fn):
    """Per-triangle coefficient vector matching ``fn`` at all domain points."""
    return np.concatenate(
        [
            triangle_interpolant(mesh.triangle(t), d, fn(domain_points(mesh.triangle(t), d)))
            for t in range(mesh.n_triangles)
        ]
    )


def test_quadrature_rule_validation():
    with pytest.raises(ConfigurationError):
        QuadratureRule(points=np.array([[0.3, 0.3, 0.4]]), weights=np.array([-1.0]), order=0)
    with pytest.raises(ConfigurationError):
        QuadratureRule(points=np.array([[0.3, 0.3, 0.4]]), weights=np.array([0.5]), order=0)
    with pytest.raises(ConfigurationError):
        triangle_rule(-1)


def test_triangle_rule_exact_for_barycentric_monomials():
    # Mean value of b1^a b2^b b3^c over a triangle is 2 a! b! c! / (a+b+c+2)!.
    for order in range(7):
        rule = triangle_rule(order)
        assert rule.order == order
        assert np.all(rule.weights > 0)
        assert np.isclose(rule.weights.sum(), 1.0, atol=1e-14)
        assert np.allclose(rule.points.sum(axis=1), 1.0, atol=1e-14)
        for total in range(order + 1):
            for a, b, c in multi_indices(total):
                exact = (
                    2.0
                    * math.factorial(a)
                    * math.factorial(b)
                    * math.factorial(c)
                    / math.factorial(a + b + c + 2)
                )
                approx = np.sum(
                    rule.weights
                    * rule.points[:, 0] ** a
                    * rule.points[:, 1] ** b
                    * rule.points[:, 2] ** c
                )
                assert abs(approx - exact) < 1e-14, (order, a, b, c)


def test_integrate_constant_over_octant():
    area = integrate_triangle(lambda p: np.ones(len(p)), octant(), triangle_rule(4))
    assert abs(area - np.pi / 2) < 1e-10 * np.pi


def test_integrate_coordinate_squared():
    # By symmetry each octant carries 1/8 of the full-sphere value 4 pi / 3.
    val = integrate_triangle(lambda p: p[:, 2] ** 2, octant(), triangle_rule(6))
    assert abs(val - np.pi / 6) < 1e-9


def test_integrate_matrix_valued_over_whole_sphere():
    # Sum over all octahedron triangles of the outer-product integrand gives
    # the isotropic second moment (4 pi / 3) I.
    mesh = base_mesh("octahedron")
    total = np.zeros((3, 3))
    for t in range(mesh.n_triangles):
        total += integrate_triangle(
            lambda p: p[:, :, None] * p[:, None, :], mesh.triangle(t), triangle_rule(6)
        )
    assert np.allclose(total, 4 * np.pi / 3 * np.eye(3), atol=1e-9)


def test_penalty_symmetric_psd_block_diagonal():
    mesh = base_mesh("octahedron")
    pen = assemble_penalty(mesh, 3)
    assert pen.degrees == (3,) and pen.parities == (1,)
    dense = pen.matrix.toarray()
    assert dense.shape == (80, 80)
    assert np.allclose(dense, dense.T, atol=1e-12)
    eigs = np.linalg.eigvalsh(dense)
    assert eigs.min() > -1e-9 * max(eigs.max(), 1.0)
    # Coefficients of different triangles never interact.
    layout = BasisLayout(3, mesh.n_triangles)
    off = dense.copy()
    for t in range(mesh.n_triangles):
        off[layout.block(t), layout.block(t)] = 0.0
    assert not np.any(off)


def test_penalty_kernel_odd_degree():
    # With homogeneity degree 1 the extension of a coordinate function is the
    # linear function itself: zero second derivatives, zero energy.  The
    # constant extends to |x|, which is curved, so it must carry energy.
    mesh = base_mesh("octahedron")
    pen = assemble_penalty(mesh, 3)
    scale = abs(pen.matrix).max()
    for axis in range(3):
        gamma = interpolate_function(mesh, 3, lambda p: p[:, axis])
        assert pen.quad_form(gamma) < 1e-9 * scale
    const = interpolate_function(mesh, 3, lambda p: np.ones(len(p)))
    assert pen.quad_form(const) > 1.0


def test_penalty_kernel_even_degree():
    # With homogeneity degree 0 constants extend to constants (zero energy)
    # while coordinate functions extend to x_i / |x| (positive energy).
    mesh = base_mesh("octahedron")
    pen = assemble_penalty(mesh, 2)
    assert pen.parities == (0,)
    scale = abs(pen.matrix).max()
    const = interpolate_function(mesh, 2, lambda p: np.ones(len(p)))
    assert pen.quad_form(const) < 1e-9 * scale
    coord = interpolate_function(mesh, 2, lambda p: p[:, 0])
    assert pen.quad_form(coord) > 1.0


def test_penalty_parity_override():
    # Flat degree-0 extensions are constants, and the degree-3 space contains
    # no constant (1 = |x|^d needs even d), so the overridden penalty is
    # positive definite: no coefficient vector escapes it.
    mesh = base_mesh("octahedron")
    pen = assemble_penalty(mesh, 3, p=0)
    assert pen.parities == (0,)
    eigs = np.linalg.eigvalsh(pen.matrix.toarray())
    assert eigs.min() > 1e-12 * eigs.max()
    with pytest.raises(ConfigurationError):
        assemble_penalty(mesh, 3, p=2)


def test_model_penalty_structure():
    mesh = base_mesh("octahedron")
    pen = model_penalty(mesh, 3)
    assert pen.degrees == (3, 2) and pen.parities == (1, 1)
    dense = pen.matrix.toarray()
    assert dense.shape == (128, 128)
    assert np.allclose(dense, dense.T, atol=1e-12)
    eigs = np.linalg.eigvalsh(dense)
    assert eigs.min() > -1e-9 * eigs.max()
    # The two components of one triangle are coupled (shared extension).
    l3 = BasisLayout(3, mesh.n_triangles)
    l2 = BasisLayout(2, mesh.n_triangles)
    cross = dense[:80, 80:]
    block0 = cross[l3.block(0), :][:, l2.block(0)]
    assert np.max(np.abs(block0)) > 1e-3
    # Distinct triangles stay uncoupled across components too.
    other = cross[l3.block(0), :][:, l2.block(1)]
    assert not np.any(other)


def test_model_penalty_diagonal_blocks_match_single_degree():
    # The component-diagonal parts equal the single-degree penalties built
    # with the shared homogeneity degree p = d mod 2.
    mesh = base_mesh("octahedron")
    pen = model_penalty(mesh, 3)
    dense = pen.matrix.toarray()
    top = assemble_penalty(mesh, 3, p=1).matrix.toarray()
    bottom = assemble_penalty(mesh, 2, p=1).matrix.toarray()
    assert np.allclose(dense[:80, :80], top, rtol=1e-12, atol=1e-12)
    assert np.allclose(dense[80:, 80:], bottom, rtol=1e-12, atol=1e-12)


def test_model_penalty_kernel():
    # Coordinate functions represented in the degree-3 component have zero
    # mixed-model energy for d=3.
    mesh = base_mesh("octahedron")
    pen = model_penalty(mesh, 3)
    scale = abs(pen.matrix).max()
    gamma = np.concatenate(
        [interpolate_function(mesh, 3, lambda p: p[:, 1]), np.zeros(48)]
    )
    assert pen.quad_form(gamma) < 1e-9 * scale
    # For d=2 the kernel is the constants, representable in the top component.
    pen2 = model_penalty(mesh, 2)
    gamma2 = np.concatenate(
        [interpolate_function(mesh, 2, lambda p: np.ones(len(p))), np.zeros(24)]
    )
    assert pen2.quad_form(gamma2) < 1e-9 * abs(pen2.matrix).max()
