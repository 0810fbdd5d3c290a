import numpy as np
import pytest

from tsss.basis import (
    BasisLayout,
    domain_points,
    eval_basis,
    n_basis,
    triangle_interpolant,
)
from tsss.errors import ConfigurationError
from tsss.mesh import base_mesh, refine
from tsss.smoothness import (
    build_constraint_system,
    build_constraints,
    check_smoothness,
    component_layouts,
    effective_dim,
    model_degrees,
    null_space,
)


def slerp(a, b, t):
    ang = np.arccos(np.clip(a @ b, -1, 1))
    return (np.sin((1 - t) * ang) * a + np.sin(t * ang) * b) / np.sin(ang)


def test_check_smoothness_validation():
    assert check_smoothness(3, 1) == (3, 1)
    with pytest.raises(ConfigurationError):
        check_smoothness(3, 3)
    with pytest.raises(ConfigurationError):
        check_smoothness(3, -1)
    with pytest.raises(ConfigurationError):
        check_smoothness(0, 0)
    with pytest.raises(ConfigurationError):
        check_smoothness(3, 1.5)


def test_model_degrees():
    assert model_degrees(3) == (3, 2)
    assert model_degrees(1) == (1, 0)


def test_constraint_matrix_shape():
    # One block of rows per interior edge: (d - rho + 1) conditions for each
    # layer rho = 0..r.  Octahedron: 12 interior edges, d=3, r=1 -> 12*(4+3).
    mesh = base_mesh("octahedron")
    m = build_constraints(mesh, 3, 1)
    assert m.shape == (84, 8 * n_basis(3))
    m0 = build_constraints(mesh, 3, 0)
    assert m0.shape == (48, 80)


def test_null_space_is_orthonormal_kernel():
    mesh = base_mesh("octahedron")
    m = build_constraints(mesh, 3, 1)
    z = null_space(m)
    assert np.max(np.abs(m @ z)) < 1e-12
    assert np.allclose(z.T @ z, np.eye(z.shape[1]), atol=1e-12)
    # Kernel dimension agrees with a dense rank computation.
    assert z.shape[1] == 80 - np.linalg.matrix_rank(m.toarray())


def test_null_space_of_empty_matrix_is_identity():
    z = null_space(np.zeros((0, 5)))
    assert np.array_equal(z, np.eye(5))


def test_global_polynomial_satisfies_constraints():
    # The sphere restriction of (a.x)^d is a C^infinity piecewise-degree-d
    # function, so its per-triangle coefficient nets must satisfy every
    # smoothness layer up to r = d - 1.
    rng = np.random.default_rng(20)
    a = rng.standard_normal(3)
    for mesh in (base_mesh("octahedron"), base_mesh("icosahedron")):
        for d in (2, 3):
            gamma = np.concatenate(
                [
                    triangle_interpolant(
                        mesh.triangle(t), d, (domain_points(mesh.triangle(t), d) @ a) ** d
                    )
                    for t in range(mesh.n_triangles)
                ]
            )
            m = build_constraints(mesh, d, d - 1)
            assert np.max(np.abs(m @ gamma)) < 1e-9


def test_constrained_spline_is_continuous_across_edges():
    # Random coefficient vectors in the kernel give single-valued functions:
    # both triangles sharing an edge evaluate identically on the edge.
    rng = np.random.default_rng(21)
    mesh = refine(base_mesh("octahedron"), 1)
    for d, r in ((2, 0), (3, 1)):
        z = null_space(build_constraints(mesh, d, r))
        gamma = z @ rng.standard_normal(z.shape[1])
        layout = BasisLayout(d, mesh.n_triangles)
        worst = 0.0
        for (i, j), (t1, _), (t2, _) in mesh.interior_edges:
            for t in (0.25, 0.5, 0.75):
                p = slerp(mesh.vertices[i], mesh.vertices[j], t)
                v1 = eval_basis(mesh.triangle(t1), d, p) @ gamma[layout.block(t1)]
                v2 = eval_basis(mesh.triangle(t2), d, p) @ gamma[layout.block(t2)]
                worst = max(worst, abs(v1 - v2))
        assert worst < 1e-9


def test_constraint_system_structure():
    mesh = base_mesh("octahedron")
    system = build_constraint_system(mesh, 3, 1)
    assert system.degrees == (3, 2)
    assert system.widths == (80, 48)
    assert system.width == 128
    assert system.effective_dim == sum(system.null_dims)
    # Null basis is orthonormal and block-structured per component.
    zb = system.null_basis
    assert np.allclose(zb.T @ zb, np.eye(zb.shape[1]), atol=1e-12)
    assert np.max(np.abs(system.matrix @ zb)) < 1e-12
    (c0, f0), (c1, f1) = system.component_slices()
    assert (c0, c1) == (slice(0, 80), slice(80, 128))
    assert f0.stop - f0.start == system.null_dims[0]
    assert f1.stop - f1.start == system.null_dims[1]
    # Cross blocks vanish: each free parameter drives one component only.
    assert not np.any(zb[c0, f1])
    assert not np.any(zb[c1, f0])


def test_effective_dim_matches_rank_oracle():
    # Sum over components of (columns - rank) computed independently, with
    # the layer count capped at each component degree.
    from tsss.smoothness import _edge_rows

    mesh = base_mesh("octahedron")
    for d, r in ((2, 1), (3, 1)):
        total = 0
        for dc in model_degrees(d):
            m = _edge_rows(mesh, dc, min(r, dc))
            total += m.shape[1] - np.linalg.matrix_rank(m.toarray())
        assert effective_dim(mesh, d, r) == total


def test_effective_dim_piecewise_linear_case():
    # Degree-1 model: the C^0 degree-1 space on a closed mesh is spanned by
    # one value per vertex (6), and the C^0 degree-0 component collapses to
    # the constants (1).
    mesh = base_mesh("octahedron")
    assert effective_dim(mesh, 1, 0) == 7
    z = null_space(build_constraints(mesh, 1, 0))
    assert z.shape[1] == 6


def test_component_layouts():
    mesh = base_mesh("octahedron")
    layouts = component_layouts(mesh, 3)
    assert [l.degree for l in layouts] == [3, 2]
    assert [l.width for l in layouts] == [80, 48]
