"""Exception types raised across the package."""

from __future__ import annotations


class TsssError(Exception):
    """Base class for all errors raised by this package.

    Every exception carries a short machine-readable ``code`` used by the
    command line tool to emit stable error identifiers.
    """

    code = "error"


class GeometryError(TsssError):
    """Degenerate or out-of-range geometric input (zero vector, collinear
    vertices, triangle not contained in an open hemisphere, ...)."""

    code = "geometry-error"


class MeshError(TsssError):
    """Structurally invalid triangulation."""

    code = "mesh-error"


class PatchError(MeshError):
    """Patch extraction produced an empty or unusable mesh."""

    code = "patch-error"


class LocationError(MeshError):
    """A query point lies outside every triangle of the mesh."""

    code = "location-error"


class ConfigurationError(TsssError):
    """Invalid degree/smoothness/penalty configuration."""

    code = "configuration-error"


class FitError(TsssError):
    """The penalized least squares problem could not be solved."""

    code = "fit-error"


class PredictionError(TsssError):
    """Prediction was requested at points outside the model domain."""

    code = "prediction-error"


class ModelError(TsssError):
    """A stored model file is malformed or inconsistent."""

    code = "model-error"


class DataError(TsssError):
    """A points file is malformed (bad header, non-unit rows, ...)."""

    code = "data-error"


class SimulationError(TsssError):
    """A simulation input is invalid (for example evaluating a test function
    on its discontinuity seam)."""

    code = "simulation-error"
