"""File formats: points CSV and fitted-model JSON.

Points files are CSV with a header of either ``x,y,z[,value]`` (Cartesian,
unit vectors within 1e-6) or ``theta,phi[,value]`` (colatitude in [0, pi],
longitude).  Numeric output uses ``repr`` so a write/read round trip is
exact.  Model files are JSON with the mesh stored inline (or as a path),
the fit configuration, the coefficient vector in basis-layout order, and
the fit diagnostics.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .errors import DataError, ModelError
from .estimator import FitConfig, FittedModel
from .geometry import UNIT_TOL, sph_to_cart
from .mesh import mesh_from_dict, mesh_to_dict, load_mesh

__all__ = [
    "read_points",
    "write_points",
    "save_model",
    "load_model",
]

_CART = ("x", "y", "z")
_SPH = ("theta", "phi")


def _parse_row(row, n_coords: int, row_number: int) -> list[float]:
    try:
        return [float(cell) for cell in row]
    except ValueError as exc:
        raise DataError(f"row {row_number}: non-numeric entry ({exc})") from exc


def read_points(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Read a points CSV; returns ``(points, values)`` with unit rows.

    ``values`` is None when the file has no value column.  Rows whose
    Cartesian coordinates are further than 1e-6 from unit length are
    rejected with their row numbers.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty points file") from None
        names = tuple(cell.strip().lower() for cell in header)
        if names[: len(_CART)] == _CART:
            coords = 3
        elif names[: len(_SPH)] == _SPH:
            coords = 2
        else:
            raise DataError(
                f"{path}: header must start with x,y,z or theta,phi, "
                f"got {','.join(names)}"
            )
        has_value = len(names) > coords
        width = coords + (1 if has_value else 0)
        rows = []
        for i, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataError(
                    f"{path}: row {i}: expected {width} columns, got {len(row)}"
                )
            rows.append(_parse_row(row, coords, i))
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(table)):
        bad = np.where(~np.isfinite(table).all(axis=1))[0]
        raise DataError(
            f"{path}: non-finite entries at rows "
            f"{[int(b) + 2 for b in bad[:5]]}"
        )
    values = table[:, coords] if has_value else None
    if coords == 2:
        points = sph_to_cart(table[:, 0], table[:, 1])
    else:
        points = table[:, :3]
        norms = np.linalg.norm(points, axis=1)
        off = np.where(np.abs(norms - 1.0) > UNIT_TOL)[0]
        if off.size:
            raise DataError(
                f"{path}: rows {[int(b) + 2 for b in off[:5]]} are not unit "
                f"vectors within {UNIT_TOL:g}"
            )
        points = points / norms[:, None]
    return points, values


def write_points(path, points, values=None, value_name: str = "value") -> None:
    """Write points (and an optional value column) as CSV at full precision."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 3:
        raise DataError(f"points must have shape (n, 3), got {points.shape}")
    header = list(_CART)
    if values is not None:
        values = np.asarray(values, dtype=float)
        if values.shape != (len(points),):
            raise DataError(
                f"values must have shape ({len(points)},), got {values.shape}"
            )
        header.append(value_name)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, p in enumerate(points):
            row = [repr(float(c)) for c in p]
            if values is not None:
                row.append(repr(float(values[i])))
            writer.writerow(row)


def save_model(path, model: FittedModel, mesh_path: str | None = None) -> None:
    """Write a fitted model as JSON.

    The mesh is stored inline unless ``mesh_path`` is given, in which case
    only that path is recorded (resolved relative to the model file when
    loading).
    """
    cfg = model.config
    payload = {
        "mesh": mesh_path if mesh_path is not None else mesh_to_dict(cfg.mesh),
        "degree": int(cfg.degree),
        "smoothness": int(cfg.smoothness),
        "lambda": float(cfg.lam),
        "coefficients": [float(c) for c in model.coefficients],
        "diagnostics": {k: (int(v) if isinstance(v, (int, np.integer)) else float(v))
                        for k, v in model.diagnostics.items()},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_model(path) -> FittedModel:
    """Read a model JSON written by :func:`save_model`."""
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: invalid model JSON ({exc})") from exc
    for key in ("mesh", "degree", "smoothness", "lambda", "coefficients"):
        if key not in payload:
            raise ModelError(f"{path}: model JSON missing {key!r}")
    mesh_field = payload["mesh"]
    if isinstance(mesh_field, str):
        mesh_file = mesh_field
        if not os.path.isabs(mesh_file):
            mesh_file = os.path.join(os.path.dirname(os.path.abspath(path)),
                                     mesh_file)
        mesh = load_mesh(mesh_file)
    else:
        mesh = mesh_from_dict(mesh_field)
    config = FitConfig(
        mesh=mesh,
        degree=int(payload["degree"]),
        smoothness=int(payload["smoothness"]),
        lam=float(payload["lambda"]),
    )
    coefficients = np.asarray(payload["coefficients"], dtype=float)
    diagnostics = dict(payload.get("diagnostics", {}))
    return FittedModel(coefficients=coefficients, config=config,
                       diagnostics=diagnostics)
