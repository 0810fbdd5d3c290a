"""Penalized least-squares spline estimation on triangulated spherical domains.

The estimator minimizes ||Y - B gamma||^2 + lambda * gamma' P gamma subject
to the smoothness constraints M gamma = 0, where B is the sparse design
matrix of basis values at the data locations and P the roughness penalty.
The constraint is eliminated through an orthonormal null-space basis Z of M:
with gamma = Z theta the problem becomes an unconstrained ridge-type solve

    (Z'B'BZ + lambda Z'PZ) theta = Z'B'Y,

handled by a dense Cholesky factorization (the reduced dimension is the
model's effective dimension, a few thousand at most in practice).

Model selection runs K-fold cross-validation jointly over the spline degree
and the penalty weight; uncertainty maps come from a wild bootstrap that
multiplies residuals by two-point variables with mean zero and unit
variance, refits on the perturbed responses, and reports the pointwise
standard deviation across replicates.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .basis import BasisLayout, bernstein_from_barycentric
from .energy import PenaltyMatrix, model_penalty
from .errors import ConfigurationError, FitError, PredictionError
from .geometry import UNIT_TOL
from .mesh import TriMesh, locate_many
from .smoothness import ConstraintSystem, build_constraint_system, check_smoothness

__all__ = [
    "Dataset",
    "FitConfig",
    "ModelSpace",
    "FittedModel",
    "CVResult",
    "BootstrapResult",
    "build_design",
    "fit",
    "predict",
    "default_lambda_grid",
    "kfold_cv",
    "bootstrap_se",
    "pmse_tmse",
]

#: Relative diagonal jitter applied when the reduced normal matrix fails to
#: factor: 1e-10 * trace / dimension.
JITTER_SCALE = 1e-10

#: Relative bound on the first-order optimality residual of a solve.
KKT_TOL = 1e-6

# Two-point wild-bootstrap weights: mean 0, variance 1, third moment 1.
_DELTA_LOW = (1.0 - math.sqrt(5.0)) / 2.0
_DELTA_HIGH = (1.0 + math.sqrt(5.0)) / 2.0
_PROB_LOW = (5.0 + math.sqrt(5.0)) / 10.0


@dataclass(frozen=True)
class Dataset:
    """Observed responses at unit-vector locations on the sphere."""

    locations: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        loc = np.ascontiguousarray(self.locations, dtype=float)
        y = np.ascontiguousarray(self.responses, dtype=float)
        if loc.ndim != 2 or loc.shape[1] != 3:
            raise ConfigurationError("locations must have shape (n, 3)")
        if y.shape != (len(loc),):
            raise ConfigurationError(
                f"got {len(loc)} locations but {y.shape} responses"
            )
        if len(loc) < 1:
            raise ConfigurationError("dataset must contain at least one point")
        if not np.all(np.isfinite(loc)) or not np.all(np.isfinite(y)):
            raise ConfigurationError("dataset entries must be finite")
        norms = np.linalg.norm(loc, axis=1)
        bad = np.nonzero(np.abs(norms - 1.0) > UNIT_TOL)[0]
        if bad.size:
            raise ConfigurationError(
                f"locations must be unit vectors; rows {bad[:5].tolist()} are off "
                f"by more than {UNIT_TOL:g}"
            )
        object.__setattr__(self, "locations", loc / norms[:, None])
        object.__setattr__(self, "responses", y)

    @property
    def n(self) -> int:
        return len(self.responses)


@dataclass(frozen=True)
class FitConfig:
    """Mesh, spline degree d, smoothness order r, and penalty weight."""

    mesh: TriMesh
    degree: int
    smoothness: int = 1
    lam: float = 0.0

    def __post_init__(self):
        check_smoothness(self.degree, self.smoothness)
        lam = float(self.lam)
        if not np.isfinite(lam) or lam < 0:
            raise ConfigurationError(f"penalty weight must be >= 0, got {self.lam!r}")
        object.__setattr__(self, "lam", lam)


@dataclass(frozen=True)
class ModelSpace:
    """Prebuilt constraint system, penalty, and layouts for one (mesh, d, r).

    Building the null basis and the penalty is the expensive part of a fit;
    cross-validation and replicated studies construct this once per degree
    and share it across folds and replicates.
    """

    mesh: TriMesh
    degree: int
    smoothness: int
    constraints: ConstraintSystem
    penalty: PenaltyMatrix
    layouts: tuple[BasisLayout, ...]

    @classmethod
    def build(cls, mesh: TriMesh, degree: int, smoothness: int) -> "ModelSpace":
        degree, smoothness = check_smoothness(degree, smoothness)
        constraints = build_constraint_system(mesh, degree, smoothness)
        penalty = model_penalty(mesh, degree)
        layouts = tuple(BasisLayout(dc, mesh.n_triangles) for dc in constraints.degrees)
        return cls(
            mesh=mesh,
            degree=degree,
            smoothness=smoothness,
            constraints=constraints,
            penalty=penalty,
            layouts=layouts,
        )

    @property
    def width(self) -> int:
        return self.constraints.width

    @property
    def effective_dim(self) -> int:
        return self.constraints.effective_dim


def build_design(data, mesh: TriMesh, layout: BasisLayout) -> sp.csr_matrix:
    """Sparse matrix of basis values: row i holds the evaluation of every
    basis function of X_i's triangle inside that triangle's column block."""
    points = data.locations if isinstance(data, Dataset) else np.atleast_2d(
        np.asarray(data, dtype=float)
    )
    idx, bary = locate_many(mesh, points)
    missing = np.nonzero(idx < 0)[0]
    if missing.size:
        raise FitError(
            f"{missing.size} data locations lie outside the mesh domain "
            f"(first at index {int(missing[0])})"
        )
    return _design_from_location(layout, idx, bary)


def _design_from_location(layout: BasisLayout, idx: np.ndarray,
                          bary: np.ndarray) -> sp.csr_matrix:
    n = len(idx)
    m = layout.block_size
    vals = bernstein_from_barycentric(bary, layout.degree)
    cols = (idx[:, None] * m + np.arange(m)[None, :]).ravel()
    rows = np.repeat(np.arange(n), m)
    return sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(n, layout.width))


def _model_design(space: ModelSpace, points: np.ndarray,
                  idx: np.ndarray | None = None,
                  bary: np.ndarray | None = None) -> sp.csr_matrix:
    if idx is None:
        idx, bary = locate_many(space.mesh, points)
        missing = np.nonzero(idx < 0)[0]
        if missing.size:
            raise FitError(
                f"{missing.size} data locations lie outside the mesh domain "
                f"(first at index {int(missing[0])})"
            )
    blocks = [_design_from_location(layout, idx, bary) for layout in space.layouts]
    return sp.hstack(blocks, format="csr")


def _factor(a: np.ndarray):
    """Cholesky factor of a symmetric matrix, retrying once with diagonal
    jitter; returns (factor, jitter_used)."""
    try:
        return scipy.linalg.cho_factor(a, lower=True, check_finite=False), 0.0
    except scipy.linalg.LinAlgError:
        pass
    jitter = JITTER_SCALE * np.trace(a) / max(len(a), 1)
    if jitter <= 0:
        jitter = JITTER_SCALE
    try:
        return (
            scipy.linalg.cho_factor(
                a + jitter * np.eye(len(a)), lower=True, check_finite=False
            ),
            jitter,
        )
    except scipy.linalg.LinAlgError as exc:
        raise FitError(
            "reduced normal matrix is numerically rank deficient even after "
            "jitter; use a coarser mesh, a lower degree, or a positive penalty "
            "weight so every coefficient is identified"
        ) from exc


@dataclass
class FittedModel:
    """A solved penalized least-squares spline.

    ``coefficients`` concatenates the constrained degree-d blocks followed by
    the degree-(d-1) blocks, matching the model space layout.
    """

    coefficients: np.ndarray
    config: FitConfig
    diagnostics: dict = field(default_factory=dict)

    @property
    def mesh(self) -> TriMesh:
        return self.config.mesh


def fit(data: Dataset, config: FitConfig,
        constraints: ConstraintSystem | None = None,
        penalty: PenaltyMatrix | None = None,
        space: ModelSpace | None = None) -> FittedModel:
    """Solve the constrained penalized least-squares problem.

    ``constraints``/``penalty`` (or a prebuilt ``space``) may be supplied to
    avoid rebuilding them across repeated fits with the same (mesh, d, r).
    """
    if not isinstance(data, Dataset):
        raise ConfigurationError("fit expects a Dataset")
    space = _resolve_space(config, constraints, penalty, space)
    design = _model_design(space, data.locations)
    y = data.responses
    z = space.constraints.null_basis
    bz = np.asarray(design @ z)
    gram = bz.T @ bz
    rhs = bz.T @ y
    pz = z.T @ (space.penalty.matrix @ z)
    factor, jitter = _factor(gram + config.lam * pz)
    theta = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
    gamma = z @ theta
    residual = y - bz @ theta
    kkt = bz.T @ residual - config.lam * (pz @ theta)
    kkt_scale = max(float(np.linalg.norm(rhs)), 1e-30)
    kkt_rel = float(np.linalg.norm(kkt)) / kkt_scale
    if kkt_rel > KKT_TOL and np.linalg.norm(rhs) > 0:
        raise FitError(
            f"solver optimality check failed (relative residual {kkt_rel:.2e}); "
            "the problem is too ill conditioned at this degree/penalty"
        )
    diagnostics = {
        "n": data.n,
        "rss": float(residual @ residual),
        "energy": space.penalty.quad_form(gamma),
        "effective_dim": space.effective_dim,
        "kkt_residual": kkt_rel,
        "jitter": jitter,
    }
    return FittedModel(coefficients=gamma, config=config, diagnostics=diagnostics)


def _resolve_space(config: FitConfig, constraints, penalty, space) -> ModelSpace:
    if space is not None:
        if (space.degree, space.smoothness) != (config.degree, config.smoothness):
            raise ConfigurationError("prebuilt space does not match the config")
        return space
    if constraints is None:
        constraints = build_constraint_system(
            config.mesh, config.degree, config.smoothness
        )
    if penalty is None:
        penalty = model_penalty(config.mesh, config.degree)
    layouts = tuple(
        BasisLayout(dc, config.mesh.n_triangles) for dc in constraints.degrees
    )
    return ModelSpace(
        mesh=config.mesh,
        degree=config.degree,
        smoothness=config.smoothness,
        constraints=constraints,
        penalty=penalty,
        layouts=layouts,
    )


def _eval_mixed(mesh: TriMesh, layouts, gamma: np.ndarray, idx: np.ndarray,
                bary: np.ndarray) -> np.ndarray:
    out = np.zeros(len(idx))
    offset = 0
    safe_idx = np.where(idx < 0, 0, idx)
    for layout in layouts:
        vals = bernstein_from_barycentric(bary, layout.degree)
        blocks = gamma[offset:offset + layout.width].reshape(
            layout.n_triangles, layout.block_size
        )
        out += np.sum(vals * blocks[safe_idx], axis=1)
        offset += layout.width
    out[idx < 0] = np.nan
    return out


def predict(model: FittedModel, points, on_missing: str = "raise") -> np.ndarray:
    """Evaluate a fitted spline at query points.

    Out-of-domain points produce NaN entries; with ``on_missing="raise"``
    (the default) a :class:`PredictionError` listing their indices is raised,
    carrying the partial values on its ``values`` attribute.
    """
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1
    pts = np.atleast_2d(points)
    config = model.config
    layouts = tuple(
        BasisLayout(dc, config.mesh.n_triangles)
        for dc in (config.degree, config.degree - 1)
    )
    idx, bary = locate_many(config.mesh, pts)
    values = _eval_mixed(config.mesh, layouts, model.coefficients, idx, bary)
    missing = np.nonzero(idx < 0)[0]
    if missing.size and on_missing == "raise":
        err = PredictionError(
            f"{missing.size} of {len(pts)} query points lie outside the model "
            f"domain (indices {missing[:5].tolist()}{'...' if missing.size > 5 else ''})"
        )
        err.indices = missing
        err.values = values
        raise err
    return values[0] if single else values


def default_lambda_grid(n: int, n_triangles: int, size: int = 10) -> np.ndarray:
    """Ten log-spaced penalty weights spanning [1e-6, 1e3] scaled by n/N."""
    if n < 1 or n_triangles < 1:
        raise ConfigurationError("need n >= 1 and at least one triangle")
    scale = n / n_triangles
    return np.geomspace(1e-6 * scale, 1e3 * scale, size)


@dataclass(frozen=True)
class CVResult:
    """Selected (degree, lambda) and the full cross-validation score table;
    ``scores[i, j]`` is the CV score of ``degrees[i]`` with ``lambdas[j]``."""

    degree: int
    lam: float
    degrees: tuple[int, ...]
    lambdas: np.ndarray
    scores: np.ndarray
    folds: int
    seed: object


def cv_folds(n: int, folds: int, seed) -> list[np.ndarray]:
    """Deterministic K-fold partition: seeded shuffle, near-equal splits."""
    if folds < 2:
        raise ConfigurationError("cross-validation needs at least 2 folds")
    if folds > n:
        raise ConfigurationError(f"cannot split {n} points into {folds} folds")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return np.array_split(rng.permutation(n), folds)


def kfold_cv(data: Dataset, mesh: TriMesh, degrees, lambdas=None,
             folds: int = 5, smoothness: int = 1, seed=None,
             spaces: dict | None = None) -> CVResult:
    """Jointly select degree and penalty weight by K-fold cross-validation.

    ``lambdas`` may be a list of grids (one per degree), a single shared
    grid, or None for the default grid.  The score of (d, lambda) sums the
    squared held-out prediction errors over all folds; the minimizer is
    returned with ties broken toward the smaller degree, then the smaller
    lambda.  Candidates whose reduced system cannot be factored in some fold
    are marked infeasible (infinite score) and skipped.
    """
    degrees = tuple(int(d) for d in degrees)
    if not degrees:
        raise ConfigurationError("need at least one candidate degree")
    if lambdas is None:
        lambda_grids = [default_lambda_grid(data.n, mesh.n_triangles)] * len(degrees)
    elif all(np.isscalar(g) or np.ndim(g) == 0 for g in lambdas):
        grid = np.asarray(lambdas, dtype=float)
        lambda_grids = [grid] * len(degrees)
    else:
        lambda_grids = [np.atleast_1d(np.asarray(g, dtype=float)) for g in lambdas]
    if len(lambda_grids) != len(degrees):
        raise ConfigurationError("one lambda grid per degree (or one shared grid)")
    if any(np.any(g < 0) for g in lambda_grids):
        raise ConfigurationError("penalty weights must be >= 0")

    parts = cv_folds(data.n, folds, seed)
    y = data.responses
    n_lam = max(len(g) for g in lambda_grids)
    scores = np.full((len(degrees), n_lam), np.inf)

    for di, d in enumerate(degrees):
        space = spaces.get(d) if spaces else None
        if space is None:
            space = ModelSpace.build(mesh, d, smoothness)
        design = _model_design(space, data.locations)
        z = space.constraints.null_basis
        bz = np.asarray(design @ z)
        gram = bz.T @ bz
        rhs = bz.T @ y
        pz = z.T @ (space.penalty.matrix @ z)
        grid = lambda_grids[di]
        total = np.zeros(len(grid))
        feasible = np.ones(len(grid), dtype=bool)
        for part in parts:
            bz_out = bz[part]
            y_out = y[part]
            gram_in = gram - bz_out.T @ bz_out
            rhs_in = rhs - bz_out.T @ y_out
            for li, lam in enumerate(grid):
                if not feasible[li]:
                    continue
                try:
                    factor, _ = _factor(gram_in + lam * pz)
                except FitError:
                    feasible[li] = False
                    continue
                theta = scipy.linalg.cho_solve(factor, rhs_in, check_finite=False)
                err = y_out - bz_out @ theta
                total[li] += float(err @ err)
        total[~feasible] = np.inf
        scores[di, :len(grid)] = total

    best = None
    for di, d in enumerate(degrees):
        for li, lam in enumerate(lambda_grids[di]):
            score = scores[di, li]
            if not np.isfinite(score):
                continue
            key = (score, d, lam)
            if best is None or key < best:
                best = key
    if best is None:
        raise FitError("every cross-validation candidate was infeasible")
    shared = all(np.array_equal(g, lambda_grids[0]) for g in lambda_grids[1:])
    return CVResult(
        degree=int(best[1]),
        lam=float(best[2]),
        degrees=degrees,
        lambdas=lambda_grids[0] if shared else lambda_grids,
        scores=scores,
        folds=folds,
        seed=seed,
    )


@dataclass(frozen=True)
class BootstrapResult:
    """Pointwise wild-bootstrap standard errors at the query points."""

    se: np.ndarray
    n_replicates: int
    seed: object


def bootstrap_se(data: Dataset, config: FitConfig, query_points,
                 n_replicates: int, seed=None, *, ddof: int = 0,
                 space: ModelSpace | None = None,
                 threads: int = 1) -> BootstrapResult:
    """Wild-bootstrap standard-error map of the fitted mean function.

    Each replicate multiplies the residuals by independent two-point
    variables (values (1 -+ sqrt 5)/2 with probabilities (5 +- sqrt 5)/10),
    refits with the same mesh, degree, smoothness, and penalty weight, and
    the map reports the pointwise standard deviation across replicates with
    divisor ``n_replicates - ddof`` (ddof=0 by default).  Replicate b draws
    from its own pre-spawned seed stream and writes into row b, so the
    result is identical for every ``threads`` value.
    """
    if n_replicates < 2:
        raise ConfigurationError("bootstrap needs at least 2 replicates")
    if ddof not in (0, 1):
        raise ConfigurationError("ddof must be 0 or 1")
    space = _resolve_space(config, None, None, space)
    design = _model_design(space, data.locations)
    y = data.responses
    z = space.constraints.null_basis
    bz = np.asarray(design @ z)
    pz = z.T @ (space.penalty.matrix @ z)
    factor, _ = _factor(bz.T @ bz + config.lam * pz)
    theta_hat = scipy.linalg.cho_solve(factor, bz.T @ y, check_finite=False)
    fitted = bz @ theta_hat
    residuals = y - fitted

    query = np.atleast_2d(np.asarray(query_points, dtype=float))
    idx, bary = locate_many(space.mesh, query)
    missing = np.nonzero(idx < 0)[0]
    if missing.size:
        raise PredictionError(
            f"{missing.size} query points lie outside the model domain "
            f"(first at index {int(missing[0])})"
        )
    qz = np.asarray(_design_from_location_multi(space, idx, bary) @ z)

    streams = np.random.SeedSequence(seed).spawn(n_replicates)
    preds = np.empty((n_replicates, len(query)))

    def one_replicate(b: int) -> None:
        rng = np.random.default_rng(streams[b])
        low = rng.random(data.n) < _PROB_LOW
        delta = np.where(low, _DELTA_LOW, _DELTA_HIGH)
        y_star = fitted + delta * residuals
        theta_star = scipy.linalg.cho_solve(factor, bz.T @ y_star, check_finite=False)
        preds[b] = qz @ theta_star

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            list(pool.map(one_replicate, range(n_replicates)))
    else:
        for b in range(n_replicates):
            one_replicate(b)
    centered = preds - preds.mean(axis=0)
    se = np.sqrt(np.sum(centered * centered, axis=0) / (n_replicates - ddof))
    return BootstrapResult(se=se, n_replicates=int(n_replicates), seed=seed)


def _design_from_location_multi(space: ModelSpace, idx: np.ndarray,
                                bary: np.ndarray) -> sp.csr_matrix:
    blocks = [_design_from_location(layout, idx, bary) for layout in space.layouts]
    return sp.hstack(blocks, format="csr")


def pmse_tmse(truth, estimates, split: str = "grid") -> float:
    """Mean squared error between true and estimated values; ``split`` labels
    whether the points are an evaluation grid or the training locations."""
    if split not in ("grid", "training"):
        raise ConfigurationError(f"split must be 'grid' or 'training', got {split!r}")
    truth = np.asarray(truth, dtype=float)
    estimates = np.asarray(estimates, dtype=float)
    if truth.shape != estimates.shape or truth.ndim != 1:
        raise ConfigurationError("truth and estimates must be equal-length vectors")
    if truth.size == 0:
        raise ConfigurationError("cannot average an empty vector")
    diff = truth - estimates
    return float(diff @ diff / truth.size)
