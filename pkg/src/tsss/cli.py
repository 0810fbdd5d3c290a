"""Command line interface: mesh tooling, fitting, tuning, bootstrap maps,
and simulation studies.

Every command reads and writes the package file formats (points CSV, mesh
JSON, model JSON, study-report JSON) and exits nonzero with a single-line
``tsss: <code>: <message>`` diagnostic on any error.
"""

from __future__ import annotations

import functools
import json
import sys

import click
import numpy as np

from . import estimator, simulation
from .errors import DataError, MeshError, TsssError
from .estimator import Dataset, FitConfig
from .io import load_model, read_points, save_model, write_points
from .mesh import (base_mesh, boundary_loops, load_mesh, mesh_to_dict,
                   patch_extract, refine, save_mesh, validate)

_COORDS_HELP = (
    "Points are unit 3-vectors (x, y, z).  Spherical input/output uses "
    "colatitude theta in [0, pi] from the +z pole and longitude phi, with "
    "x = (sin(theta) cos(phi), sin(theta) sin(phi), cos(theta))."
)


def _cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except TsssError as exc:
            message = " ".join(str(exc).split())
            click.echo(f"tsss: {exc.code}: {message}", err=True)
            raise SystemExit(1)
        except OSError as exc:
            message = " ".join(str(exc).split())
            click.echo(f"tsss: io-error: {message}", err=True)
            raise SystemExit(1)

    return wrapper


def _int_list(_ctx, _param, value):
    if value is None:
        return None
    try:
        return tuple(int(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}")


def _float_list(_ctx, _param, value):
    if value is None:
        return None
    try:
        return tuple(float(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}")


@click.group(help="Penalized spline smoothing on the sphere over "
                  "triangulations.\n\n" + _COORDS_HELP)
def main():
    pass


@main.command()
@click.option("--base", type=click.Choice(["octahedron", "icosahedron"]),
              default="octahedron", show_default=True,
              help="Platonic base triangulation.")
@click.option("--refine", "levels", type=click.IntRange(min=0), default=0,
              show_default=True,
              help="Rounds of edge-midpoint subdivision (each multiplies the "
                   "triangle count by 4).")
@click.option("--patch", "patch_file", type=click.Path(exists=True, dir_okay=False),
              default=None,
              help="Points CSV; keep only triangles containing observations.")
@click.option("--min-per-tri", type=click.IntRange(min=1), default=1,
              show_default=True,
              help="Minimum points a triangle needs to stay in the patch.")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Output mesh JSON.")
@_cli_errors
def triangulate(base, levels, patch_file, min_per_tri, out):
    """Build a triangulation: refined base mesh, optionally cut to a patch."""
    mesh = refine(base_mesh(base), levels) if levels else base_mesh(base)
    if patch_file is not None:
        points, _ = read_points(patch_file)
        mesh = patch_extract(mesh, points, min_points_per_triangle=min_per_tri)
    report = validate(mesh)
    if not report.ok:
        raise MeshError("invalid triangulation: " + "; ".join(report.violations[:3]))
    payload = mesh_to_dict(mesh)
    payload["metadata"] = {
        "n_vertices": report.n_vertices,
        "n_edges": report.n_edges,
        "n_triangles": report.n_triangles,
        "n_boundary_edges": report.n_boundary_edges,
        "euler_characteristic": report.euler_characteristic,
        "boundary_loops": boundary_loops(mesh),
    }
    with open(out, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")
    click.echo(f"wrote {out}: {report.n_vertices} vertices, "
               f"{report.n_triangles} triangles, "
               f"{report.n_boundary_edges} boundary edges")


def _read_training(data_file) -> Dataset:
    points, values = read_points(data_file)
    if values is None:
        raise DataError(f"{data_file}: a value column is required for fitting")
    return Dataset(points, values)


@main.command()
@click.option("--data", "data_file", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Training CSV with x,y,z,value or theta,phi,value.")
@click.option("--mesh", "mesh_file", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Mesh JSON.")
@click.option("--degree", required=True, type=click.IntRange(min=1),
              help="Spline degree d.")
@click.option("--smoothness", type=click.IntRange(min=0), default=1,
              show_default=True, help="Continuity order r (requires r < d).")
@click.option("--lambda", "lam", type=float, default=0.0, show_default=True,
              help="Roughness penalty weight.")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Output model JSON.")
@_cli_errors
def fit(data_file, mesh_file, degree, smoothness, lam, out):
    """Fit the penalized spline estimate to observed data."""
    data = _read_training(data_file)
    mesh = load_mesh(mesh_file)
    model = estimator.fit(data, FitConfig(mesh, degree, smoothness, lam))
    save_model(out, model)
    diag = model.diagnostics
    click.echo(f"wrote {out}: n={diag['n']} effective_dim={diag['effective_dim']} "
               f"rss={diag['rss']:.6g} energy={diag['energy']:.6g}")


@main.command()
@click.option("--model", "model_file", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Model JSON.")
@click.option("--points", "points_file", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Query points CSV (value column ignored).")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Output CSV with columns x,y,z,prediction.")
@_cli_errors
def predict(model_file, points_file, out):
    """Evaluate a fitted model at query points."""
    model = load_model(model_file)
    points, _ = read_points(points_file)
    values = estimator.predict(model, points)
    write_points(out, points, values, value_name="prediction")
    click.echo(f"wrote {out}: {len(points)} predictions")


@main.command()
@click.option("--data", "data_file", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Training CSV with a value column.")
@click.option("--mesh", "mesh_file", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Mesh JSON.")
@click.option("--degrees", required=True, callback=_int_list,
              help="Comma-separated candidate degrees, e.g. 2,3,4.")
@click.option("--lambdas", callback=_float_list, default=None,
              help="Comma-separated candidate penalty weights "
                   "(default: a log-spaced grid scaled by n/N).")
@click.option("--folds", type=click.IntRange(min=2), default=5,
              show_default=True, help="Number of cross-validation folds.")
@click.option("--smoothness", type=click.IntRange(min=0), default=1,
              show_default=True)
@click.option("--seed", type=int, default=None,
              help="Seed for the fold shuffle (omit for a random split).")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Optional JSON report path (default: stdout).")
@_cli_errors
def cv(data_file, mesh_file, degrees, lambdas, folds, smoothness, seed, out):
    """Choose degree and penalty weight by k-fold cross validation."""
    data = _read_training(data_file)
    mesh = load_mesh(mesh_file)
    result = estimator.kfold_cv(data, mesh, degrees, lambdas=lambdas,
                                folds=folds, smoothness=smoothness, seed=seed)
    grids = (result.lambdas if isinstance(result.lambdas, list)
             else [result.lambdas] * len(result.degrees))
    payload = {
        "degree": int(result.degree),
        "lambda": float(result.lam),
        "folds": int(result.folds),
        "seed": result.seed,
        "degrees": [int(d) for d in result.degrees],
        "lambdas": [[float(v) for v in grid] for grid in grids],
        "scores": [[float(v) for v in row] for row in result.scores],
    }
    text = json.dumps(payload, indent=2)
    if out is None:
        click.echo(text)
    else:
        with open(out, "w") as fh:
            fh.write(text + "\n")
        click.echo(f"wrote {out}: selected degree={result.degree} "
                   f"lambda={result.lam:.6g}")


@main.command()
@click.option("--data", "data_file", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Training CSV with a value column.")
@click.option("--mesh", "mesh_file", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Mesh JSON.")
@click.option("--degree", required=True, type=click.IntRange(min=1))
@click.option("--smoothness", type=click.IntRange(min=0), default=1,
              show_default=True)
@click.option("--lambda", "lam", type=float, default=0.0, show_default=True)
@click.option("--reps", type=click.IntRange(min=2), default=100,
              show_default=True, help="Number of bootstrap replicates.")
@click.option("--query", "query_file", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Query points CSV for the standard-error map.")
@click.option("--seed", type=int, default=None)
@click.option("--threads", type=click.IntRange(min=1), default=1,
              envvar="TSSS_THREADS", show_default=True,
              help="Worker threads (results do not depend on this).")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Output CSV with columns x,y,z,se.")
@_cli_errors
def bootstrap(data_file, mesh_file, degree, smoothness, lam, reps, query_file,
              seed, threads, out):
    """Wild-bootstrap standard-error map of the fitted mean function."""
    data = _read_training(data_file)
    mesh = load_mesh(mesh_file)
    query, _ = read_points(query_file)
    result = estimator.bootstrap_se(data, FitConfig(mesh, degree, smoothness, lam),
                                    query, reps, seed=seed, threads=threads)
    write_points(out, query, result.se, value_name="se")
    click.echo(f"wrote {out}: {len(query)} standard errors from "
               f"{result.n_replicates} replicates")


@main.command()
@click.option("--function", required=True,
              type=click.Choice(sorted(simulation.TEST_FUNCTIONS)),
              help="Test mean function (m3 runs on the seam-avoiding patch).")
@click.option("--n", required=True, type=click.IntRange(min=1),
              help="Observations per replicate (a perfect square when "
                   "--sampling grid).")
@click.option("--noise", type=click.Choice(["constant", "sigma1", "sigma2"]),
              default="sigma1", show_default=True,
              help="Noise standard-deviation field.")
@click.option("--c-sigma", type=float, default=0.5, show_default=True,
              help="Noise scale multiplier.")
@click.option("--reps", type=click.IntRange(min=1), default=100,
              show_default=True, help="Monte Carlo replicates.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--mesh", "mesh_file", type=click.Path(exists=True, dir_okay=False),
              default=None,
              help="Mesh JSON (default: octahedron refined once, or the "
                   "seam-avoiding patch for m3).")
@click.option("--degrees", callback=_int_list, default=None,
              help="Candidate degrees (default: 2 for m3, else 3).")
@click.option("--lambdas", callback=_float_list, default=None,
              help="Candidate penalty weights (default: log-spaced grid; a "
                   "single value skips cross validation).")
@click.option("--folds", type=click.IntRange(min=2), default=5, show_default=True)
@click.option("--grid-size", type=click.IntRange(min=4), default=10201,
              show_default=True, help="Evaluation grid size (perfect square).")
@click.option("--sampling", type=click.Choice(["grid", "uniform"]),
              default="grid", show_default=True,
              help="Training locations: fixed lattice or uniform random.")
@click.option("--threads", type=click.IntRange(min=1), default=1,
              envvar="TSSS_THREADS", show_default=True,
              help="Worker threads (results do not depend on this).")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Study-report JSON path (default: stdout).")
@_cli_errors
def simulate(function, n, noise, c_sigma, reps, seed, mesh_file, degrees,
             lambdas, folds, grid_size, sampling, threads, out):
    """Run a Monte Carlo study of the estimator on a test function."""
    if mesh_file is not None:
        mesh = load_mesh(mesh_file)
    elif function == "m3":
        mesh = simulation.build_patch_domain()
    else:
        mesh = refine(base_mesh("octahedron"), 1)
    if degrees is None:
        degrees = (2,) if function == "m3" else (3,)
    if lambdas is not None and len(lambdas) == 1:
        lambdas = lambdas[0]
    config = simulation.SimConfig(
        function=function,
        noise=simulation.NoiseModel(noise, c_sigma),
        n=n,
        mesh=mesh,
        degrees=degrees,
        lambdas=lambdas,
        folds=folds,
        n_replicates=reps,
        seed=seed,
        grid_size=grid_size,
        sampling=sampling,
    )
    report = simulation.run_study(config, threads=threads)
    text = json.dumps(report.to_dict(), indent=2)
    if out is None:
        click.echo(text)
    else:
        with open(out, "w") as fh:
            fh.write(text + "\n")
        click.echo(f"wrote {out}: mean PMSE {report.mean_pmse:.6g} over "
                   f"{reps} replicates")


if __name__ == "__main__":
    main()
