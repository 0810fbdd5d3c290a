"""Cross-edge smoothness constraints and the model's free-parameter basis.

For two spherical triangles tau = <w, a, b> and tilde-tau = <w~, b, a>
sharing the edge {a, b} (every interior edge of a valid mesh is traversed
in opposite directions by its two triangles), the piecewise polynomial with
coefficient nets gamma (on tau) and gamma~ (on tilde-tau) joins with C^rho
continuity across the edge exactly when, for every layer rho' <= rho and
every j + k = d - rho',

    gamma~_{rho', j, k} = sum_{nu+mu+kappa = rho'}
        gamma_{nu, k+mu, j+kappa} * B^{rho'}_{nu mu kappa}(bc(w~)),

where bc(w~) are the spherical barycentric coordinates of the off-edge
vertex w~ of tilde-tau with respect to tau, and indices are written in the
local frames (off-edge, edge-from, edge-to) of each triangle.  Collecting
all layers rho' = 0..r over all interior edges gives the sparse constraint
matrix M; splines are exactly the coefficient vectors with M gamma = 0.

The fitted model for degree d uses the direct sum of the degree-d and
degree-(d-1) constrained spaces: both parities of homogeneous extension are
then available, so constants and all smooth functions can be approximated
regardless of whether d is even or odd.  :func:`build_constraints` emits the
single-degree matrix; :func:`build_constraint_system` assembles the
block-diagonal two-component system whose null space parameterizes the
model, and :func:`effective_dim` counts its free parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .basis import BasisLayout, check_degree, multi_indices, n_basis
from .errors import ConfigurationError, MeshError
from .mesh import TriMesh

__all__ = [
    "RANK_TOL",
    "check_smoothness",
    "build_constraints",
    "null_space",
    "ConstraintSystem",
    "build_constraint_system",
    "model_degrees",
    "effective_dim",
    "component_layouts",
]

#: Relative singular-value threshold separating rank from null space.
RANK_TOL = 1e-10

# Local frame (off-edge vertex, edge start, edge end) for each local edge
# index; local edge e joins local vertices e and (e+1) % 3.
_LOCAL_FRAMES = ((2, 0, 1), (0, 1, 2), (1, 2, 0))


def check_smoothness(d: int, r: int) -> tuple[int, int]:
    """Validate a (degree, smoothness) pair for the public single-space API:
    integer 0 <= r < d."""
    d = check_degree(d, minimum=1)
    if not isinstance(r, (int, np.integer)) or isinstance(r, bool):
        raise ConfigurationError(f"smoothness must be an integer, got {r!r}")
    if not 0 <= r < d:
        raise ConfigurationError(
            f"smoothness must satisfy 0 <= r < degree, got r={int(r)}, d={d}"
        )
    return d, int(r)


def model_degrees(d: int) -> tuple[int, int]:
    """Component degrees (d, d-1) of the mixed model space for degree d."""
    d = check_degree(d, minimum=1)
    return d, d - 1


def _edge_rows(mesh: TriMesh, d: int, layers: int) -> sp.csr_matrix:
    """Constraint rows enforcing C^layers continuity for the single degree-d
    space; valid for any 0 <= layers <= d (layers above d add nothing: a
    piecewise degree-d function that joins C^d is a global polynomial)."""
    check_degree(d)
    layers = min(int(layers), d)
    m = n_basis(d) if d >= 1 else 1
    width = m * mesh.n_triangles
    if d >= 1:
        pos = {tuple(int(v) for v in ijk): a for a, ijk in enumerate(multi_indices(d))}
    else:
        pos = {(0, 0, 0): 0}

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    count = 0
    for _edge, (t1, e1), (t2, e2) in mesh.interior_edges:
        tri1 = mesh.triangle(t1)
        off1, fr1, to1 = _LOCAL_FRAMES[e1]
        off2, fr2, to2 = _LOCAL_FRAMES[e2]
        v_from1 = mesh.triangles[t1, fr1]
        if mesh.triangles[t2, to2] != v_from1 or mesh.triangles[t2, fr2] != mesh.triangles[t1, to1]:
            raise MeshError(
                f"interior edge between triangles {t1} and {t2} is not traversed "
                "in opposite directions; mesh orientation is inconsistent"
            )
        w2 = mesh.vertices[mesh.triangles[t2, off2]]
        bc = (tri1.inverse @ w2)[[off1, fr1, to1]]
        for rho in range(layers + 1):
            weights = {}
            for nu in range(rho + 1):
                for mu in range(rho - nu + 1):
                    ka = rho - nu - mu
                    coef = factorial(rho) // (factorial(nu) * factorial(mu) * factorial(ka))
                    weights[(nu, mu, ka)] = coef * bc[0] ** nu * bc[1] ** mu * bc[2] ** ka
            for j in range(d - rho + 1):
                k = d - rho - j
                loc2 = [0, 0, 0]
                loc2[off2], loc2[fr2], loc2[to2] = rho, j, k
                rows.append(count)
                cols.append(t2 * m + pos[tuple(loc2)])
                vals.append(1.0)
                for (nu, mu, ka), weight in weights.items():
                    loc1 = [0, 0, 0]
                    loc1[off1], loc1[fr1], loc1[to1] = nu, k + mu, j + ka
                    rows.append(count)
                    cols.append(t1 * m + pos[tuple(loc1)])
                    vals.append(-weight)
                count += 1
    return sp.csr_matrix(
        (np.array(vals), (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))),
        shape=(count, width),
    )


def build_constraints(mesh: TriMesh, d: int, r: int) -> sp.csr_matrix:
    """Sparse matrix M of C^r conditions over the single degree-d space:
    sum_{rho<=r}(d - rho + 1) rows per interior edge, one coefficient block
    of (d+1)(d+2)/2 columns per triangle."""
    d, r = check_smoothness(d, r)
    return _edge_rows(mesh, d, r)


def null_space(matrix) -> np.ndarray:
    """Orthonormal basis of ker(matrix) via dense SVD; singular values below
    RANK_TOL times the largest count as zero."""
    dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
    n_cols = dense.shape[1]
    if dense.shape[0] == 0 or not np.any(dense):
        return np.eye(n_cols)
    _, s, vh = scipy.linalg.svd(dense, full_matrices=True, lapack_driver="gesdd")
    rank = int(np.sum(s > s[0] * RANK_TOL))
    return vh[rank:].T.copy()


@dataclass(frozen=True)
class ConstraintSystem:
    """Block-diagonal constraint system of the degree-d model space
    S^r_d + S^r_{d-1}.

    ``matrix`` stacks the per-component edge conditions block-diagonally and
    ``null_basis`` holds an orthonormal basis of its kernel with matching
    block structure; each model coefficient vector concatenates the degree-d
    blocks followed by the degree-(d-1) blocks.
    """

    degree: int
    smoothness: int
    degrees: tuple[int, ...]
    widths: tuple[int, ...]
    null_dims: tuple[int, ...]
    matrix: sp.csr_matrix
    null_basis: np.ndarray

    @property
    def width(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def effective_dim(self) -> int:
        return int(self.null_basis.shape[1])

    def component_slices(self) -> list[tuple[slice, slice]]:
        """Per component, the (coefficient columns, free parameters) slices
        into the full vectors."""
        out = []
        c0 = f0 = 0
        for w, k in zip(self.widths, self.null_dims):
            out.append((slice(c0, c0 + w), slice(f0, f0 + k)))
            c0 += w
            f0 += k
        return out


def build_constraint_system(mesh: TriMesh, d: int, r: int) -> ConstraintSystem:
    """Constraints and null basis of the mixed model space for degree d.

    Component degrees are (d, d-1); the C^r layer count is capped at each
    component's degree (a degree-q piecewise polynomial joining C^q across
    every edge is already as constrained as its degree allows).
    """
    d, r = check_smoothness(d, r)
    degrees = model_degrees(d)
    mats = [_edge_rows(mesh, dc, min(r, dc)) for dc in degrees]
    zs = [null_space(m) for m in mats]
    matrix = sp.block_diag(mats, format="csr")
    widths = tuple(m.shape[1] for m in mats)
    null_dims = tuple(z.shape[1] for z in zs)
    null_basis = np.zeros((sum(widths), sum(null_dims)))
    c0 = f0 = 0
    for w, z in zip(widths, zs):
        null_basis[c0:c0 + w, f0:f0 + z.shape[1]] = z
        c0 += w
        f0 += z.shape[1]
    return ConstraintSystem(
        degree=d,
        smoothness=r,
        degrees=degrees,
        widths=widths,
        null_dims=null_dims,
        matrix=matrix,
        null_basis=null_basis,
    )


def effective_dim(mesh: TriMesh, d: int, r: int) -> int:
    """Free parameters of the degree-d model space on ``mesh`` under C^r."""
    return build_constraint_system(mesh, d, r).effective_dim


def component_layouts(mesh: TriMesh, d: int) -> tuple[BasisLayout, ...]:
    """Coefficient layouts of the model's components, in coefficient order."""
    return tuple(BasisLayout(dc, mesh.n_triangles) for dc in model_degrees(d))
