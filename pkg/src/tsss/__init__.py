"""Penalized least-squares smoothing on the sphere with spherical
Bernstein-Bezier splines over triangulations.

The package estimates a mean function from noisy observations at scattered
locations on the unit sphere (or on a triangulated patch of it): build a
mesh, pick a spline degree and continuity order, and fit with a roughness
penalty whose weight is chosen by k-fold cross validation.  Uncertainty
maps come from a wild bootstrap.  See the README for worked examples.
"""

from .errors import (
    ConfigurationError,
    DataError,
    FitError,
    GeometryError,
    LocationError,
    MeshError,
    ModelError,
    PatchError,
    PredictionError,
    SimulationError,
    TsssError,
)
from .geometry import (
    UNIT_TOL,
    arc_distance,
    cart_to_sph,
    geodesic_distance,
    sph_to_cart,
    unit_vector,
)
from .mesh import (
    TriMesh,
    ValidationReport,
    base_mesh,
    boundary_loops,
    load_mesh,
    mesh_from_dict,
    mesh_stats,
    mesh_to_dict,
    patch_extract,
    refine,
    save_mesh,
    submesh,
    validate,
)
from .basis import BasisLayout, domain_points, eval_spline
from .smoothness import ConstraintSystem, build_constraint_system, build_constraints
from .energy import PenaltyMatrix, assemble_penalty, model_penalty
from .estimator import (
    BootstrapResult,
    CVResult,
    Dataset,
    FitConfig,
    FittedModel,
    ModelSpace,
    bootstrap_se,
    build_design,
    cv_folds,
    default_lambda_grid,
    fit,
    kfold_cv,
    pmse_tmse,
    predict,
)
from .simulation import (
    TEST_FUNCTIONS,
    NoiseModel,
    SimConfig,
    StudyReport,
    build_patch_domain,
    eval_m1,
    eval_m2,
    eval_m3,
    eval_sigma,
    make_grid,
    run_study,
    snr,
)
from .io import load_model, read_points, save_model, write_points

__version__ = "0.1.0"

__all__ = [
    "TsssError", "GeometryError", "MeshError", "PatchError", "LocationError",
    "ConfigurationError", "FitError", "PredictionError", "ModelError",
    "DataError", "SimulationError",
    "UNIT_TOL", "unit_vector", "sph_to_cart", "cart_to_sph",
    "geodesic_distance", "arc_distance",
    "TriMesh", "ValidationReport", "base_mesh", "refine", "submesh",
    "patch_extract", "validate", "mesh_stats", "boundary_loops",
    "mesh_to_dict", "mesh_from_dict", "save_mesh", "load_mesh",
    "BasisLayout", "domain_points", "eval_spline",
    "ConstraintSystem", "build_constraints", "build_constraint_system",
    "PenaltyMatrix", "assemble_penalty", "model_penalty",
    "Dataset", "FitConfig", "FittedModel", "ModelSpace", "fit", "predict",
    "build_design", "default_lambda_grid", "cv_folds", "kfold_cv", "CVResult",
    "bootstrap_se", "BootstrapResult", "pmse_tmse",
    "TEST_FUNCTIONS", "NoiseModel", "SimConfig", "StudyReport", "run_study",
    "make_grid", "build_patch_domain", "eval_m1", "eval_m2", "eval_m3",
    "eval_sigma", "snr",
    "read_points", "write_points", "save_model", "load_model",
    "__version__",
]
