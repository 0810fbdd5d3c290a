"""Test functions, noise models, grids, and the replicated study driver.

The suite contains two smooth mean functions on the whole sphere, one
discontinuity-free-on-a-patch mean function built from a rotated step
surface, constant and spatially varying noise standard deviations, and a
driver that repeats the simulate / fit / evaluate cycle and aggregates
prediction errors.

Reproducibility: replicate r of a study with seed s draws all of its
randomness from a Philox counter-based generator keyed by the integer pair
(s, r), so reports are bit-identical regardless of how replicates are
scheduled across threads.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, FitError, ModelError, SimulationError
from .estimator import (
    Dataset,
    FitConfig,
    ModelSpace,
    default_lambda_grid,
    fit,
    kfold_cv,
    pmse_tmse,
    predict,
)
from .geometry import arc_distance, cart_to_sph, sph_to_cart
from .mesh import TriMesh, base_mesh, locate_many, refine, submesh, validate

__all__ = [
    "eval_m1",
    "eval_m2",
    "eval_m3",
    "seam_distance",
    "eval_sigma",
    "snr",
    "make_grid",
    "build_patch_domain",
    "NoiseModel",
    "SimConfig",
    "StudyReport",
    "run_study",
    "TEST_FUNCTIONS",
]

#: Points closer than this to the step seam are rejected by eval_m3.
SEAM_TOL = 1e-9

#: Default geodesic clearance between the patch domain and the seam.
PATCH_BUFFER = 0.15

_SEAM_THRESHOLD = -0.84
_SEAM_TWIST = math.pi / 12.0  # longitude shift of the seam: theta/6 at theta=pi/2


def _check_points(x) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ConfigurationError("points must have shape (n, 3)")
    return pts


def eval_m1(x) -> np.ndarray | float:
    """Smooth whole-sphere mean function mixing even and odd terms."""
    pts = _check_points(x)
    x1, x2, x3 = pts[:, 0], pts[:, 1], pts[:, 2]
    out = -2.0 + 0.5 * (
        x1**2 + np.exp(2.0 * x2**3) + np.exp(2.0 * x3**2) + 10.0 * x1 * x2 * x3
    )
    return float(out[0]) if np.ndim(x) == 1 else out


def eval_m2(x) -> np.ndarray | float:
    """Smooth whole-sphere mean function, a shifted quartic monomial."""
    pts = _check_points(x)
    x1, x2, x3 = pts[:, 0], pts[:, 1], pts[:, 2]
    out = 2.5 * ((x1 - 1.0) * (x2 - 1.0) * x3**2) - 3.0
    return float(out[0]) if np.ndim(x) == 1 else out


def _m3_base(pts: np.ndarray) -> np.ndarray:
    """Step-plus-arctan surface before the longitude twist: antisymmetric in
    x3 where x1 >= -0.84, smooth arctan ridge where x1 < -0.84."""
    x1, x3 = pts[:, 0], pts[:, 2]
    amp = 0.08 * math.pi + 0.84 + x1
    high = x1 >= _SEAM_THRESHOLD
    out = np.empty(len(pts))
    out[high] = np.where(x3[high] > 0, amp[high], -amp[high])
    low = ~high
    out[low] = -0.16 * np.arctan(x3[low] / (0.84 + x1[low]))
    return out


def _seam_arcs() -> tuple[np.ndarray, ...]:
    """Endpoints of the two equatorial sub-arcs forming the jump set.

    The twisted surface jumps across {x3' = 0, x1' >= -0.84}; pulled back
    through the twist this is the equatorial arc of longitude
    phi in [-pi/12 - alpha, -pi/12 + alpha] with alpha = arccos(-0.84).
    The total opening 2*alpha exceeds pi, so the arc is split at its midpoint
    to keep each piece a minor arc.
    """
    alpha = math.acos(_SEAM_THRESHOLD)
    mid = -_SEAM_TWIST
    p = lambda phi: np.array([math.cos(phi), math.sin(phi), 0.0])
    return p(mid - alpha), p(mid), p(mid + alpha)


_SEAM_LO, _SEAM_MID, _SEAM_HI = _seam_arcs()


def seam_distance(x) -> np.ndarray | float:
    """Geodesic distance to the jump set of the twisted step function."""
    pts = _check_points(x)
    d = np.minimum(
        arc_distance(pts, _SEAM_LO, _SEAM_MID),
        arc_distance(pts, _SEAM_MID, _SEAM_HI),
    )
    return float(d[0]) if np.ndim(x) == 1 else d


def eval_m3(x) -> np.ndarray | float:
    """Twisted step mean function for patch domains.

    Each point's longitude is advanced by colatitude/6 before evaluating the
    step surface, which bends the jump set into a curved equatorial arc.
    Points within ``SEAM_TOL`` of the jump set are rejected.
    """
    pts = _check_points(x)
    near = seam_distance(pts) < SEAM_TOL
    if np.any(np.atleast_1d(near)):
        first = int(np.argmax(np.atleast_1d(near)))
        raise SimulationError(
            f"point {first} lies on the discontinuity seam of the step "
            "function (geodesic distance below 1e-9); it has no defined value"
        )
    theta, phi = cart_to_sph(pts)
    out = _m3_base(sph_to_cart(theta, phi + theta / 6.0))
    return float(out[0]) if np.ndim(x) == 1 else out


TEST_FUNCTIONS = {"m1": eval_m1, "m2": eval_m2, "m3": eval_m3}

SIGMA_KINDS = ("constant", "sigma1", "sigma2")


def eval_sigma(kind: str, c: float, x) -> np.ndarray | float:
    """Noise standard deviation at ``x``.

    constant: sigma == c everywhere.
    sigma1:   c * {1 - (x1^2 + x2^2 + 1.5 x3^2) / 10}  (whole sphere).
    sigma2:   c * {1 - (1.5 (x1+1)^2 + x2^2 + x3^2) / 30}  (patch studies).
    """
    if kind not in SIGMA_KINDS:
        raise ConfigurationError(
            f"noise kind must be one of {SIGMA_KINDS}, got {kind!r}"
        )
    c = float(c)
    if kind == "constant" and c < 0:
        raise ConfigurationError("constant noise level must be >= 0")
    if kind != "constant" and c <= 0:
        raise ConfigurationError("noise scale must be positive")
    pts = _check_points(x)
    x1, x2, x3 = pts[:, 0], pts[:, 1], pts[:, 2]
    if kind == "constant":
        out = np.full(len(pts), c)
    elif kind == "sigma1":
        out = c * (1.0 - (x1**2 + x2**2 + 1.5 * x3**2) / 10.0)
    else:
        out = c * (1.0 - (1.5 * (x1 + 1.0) ** 2 + x2**2 + x3**2) / 30.0)
    if kind != "constant" and np.any(out <= 0):
        raise ModelError(
            f"noise standard deviation {kind} with scale {c} is nonpositive "
            "somewhere on the sphere"
        )
    return float(out[0]) if np.ndim(x) == 1 else out


@dataclass(frozen=True)
class NoiseModel:
    """Noise specification: ``kind`` selects the shape, ``scale`` is sigma
    for the constant kind and the multiplier c for the varying kinds."""

    kind: str
    scale: float

    def __post_init__(self):
        eval_sigma(self.kind, self.scale, np.array([[0.0, 0.0, 1.0]]))

    def sd(self, x) -> np.ndarray | float:
        return eval_sigma(self.kind, self.scale, x)


def snr(function, noise: NoiseModel, grid) -> float:
    """Signal-to-noise ratio on a grid: sample variance of the mean function
    divided by the grid average of the noise variance."""
    pts = _check_points(grid)
    if len(pts) < 2:
        raise ConfigurationError("snr needs at least two grid points")
    fn = TEST_FUNCTIONS[function] if isinstance(function, str) else function
    values = np.asarray(fn(pts), dtype=float)
    sd = np.asarray(noise.sd(pts), dtype=float)
    sd = np.broadcast_to(sd, (len(pts),))
    noise_var = float(np.mean(sd**2))
    signal_var = float(np.var(values, ddof=1))
    if noise_var == 0:
        return math.inf if signal_var > 0 else math.nan
    return signal_var / noise_var


def make_grid(kind: str, count: int, domain: TriMesh | None = None) -> np.ndarray:
    """Deterministic point sets on the sphere.

    ``latlong`` builds a sqrt(count) x sqrt(count) colatitude/longitude
    lattice at cell centers (poles excluded); ``endpoint`` builds the closed
    graphics-style lattice whose colatitude and longitude ranges both include
    their endpoints, so each pole appears sqrt(count) times and the longitude
    seam twice (weighting that matters when the lattice is a training
    design); ``fibonacci`` builds a golden angle spiral.  With a ``domain``
    mesh, points outside it are dropped.
    """
    if count < 1:
        raise ConfigurationError("grid size must be >= 1")
    if kind in ("latlong", "endpoint"):
        side = int(round(math.sqrt(count)))
        if side * side != count:
            raise ConfigurationError(
                f"{kind} grid size must be a perfect square, got {count}"
            )
        if kind == "latlong":
            theta = math.pi * (np.arange(side) + 0.5) / side
            phi = 2.0 * math.pi * np.arange(side) / side
        else:
            theta = np.linspace(0.0, math.pi, side)
            phi = np.linspace(0.0, 2.0 * math.pi, side)
        tt, pp = np.meshgrid(theta, phi, indexing="ij")
        pts = sph_to_cart(tt.ravel(), pp.ravel())
    elif kind == "fibonacci":
        k = np.arange(count)
        z = 1.0 - (2.0 * k + 1.0) / count
        golden = (1.0 + math.sqrt(5.0)) / 2.0
        phi = 2.0 * math.pi * k / golden
        s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        pts = np.column_stack([s * np.cos(phi), s * np.sin(phi), z])
    else:
        raise ConfigurationError(
            f"grid kind must be latlong, endpoint, or fibonacci, got {kind!r}"
        )
    if domain is not None:
        idx, _ = locate_many(domain, pts)
        pts = pts[idx >= 0]
    return pts


def build_patch_domain(buffer: float = PATCH_BUFFER, levels: int = 2) -> TriMesh:
    """Spherical patch avoiding the step function's jump set.

    Starts from a ``levels``-times refined octahedron and keeps the triangles
    whose vertices, normalized edge midpoints, and normalized centroid all
    stay at least ``buffer`` geodesic distance from the seam.
    """
    if buffer <= SEAM_TOL:
        raise ConfigurationError("patch buffer must exceed the seam tolerance")
    mesh = refine(base_mesh("octahedron"), levels)
    verts = mesh.vertices[mesh.triangles]                      # (T, 3, 3)
    mids = verts + np.roll(verts, -1, axis=1)                  # edge sums
    cents = verts.sum(axis=1, keepdims=True)                   # (T, 1, 3)
    samples = np.concatenate([verts, mids, cents], axis=1)     # (T, 7, 3)
    samples = samples / np.linalg.norm(samples, axis=2, keepdims=True)
    dist = seam_distance(samples.reshape(-1, 3)).reshape(mesh.n_triangles, 7)
    keep = np.nonzero(dist.min(axis=1) >= buffer)[0]
    patch = submesh(mesh, keep)
    report = validate(patch)
    if not report.ok:
        raise ConfigurationError(
            "patch construction produced an invalid mesh: "
            + "; ".join(report.violations)
        )
    return patch


@dataclass(frozen=True)
class SimConfig:
    """Replicated-study configuration.

    ``degrees`` with one entry fixes the degree; more entries select the
    degree by cross-validation.  ``lambdas`` may be None (default grid), a
    single value (no penalty tuning), or a grid for cross-validation.
    ``sampling`` is "grid" for a fixed latlong design or "uniform" for fresh
    uniform draws on the domain each replicate.
    """

    function: str
    noise: NoiseModel
    n: int
    mesh: TriMesh
    degrees: tuple[int, ...]
    smoothness: int = 1
    lambdas: object = None
    folds: int = 5
    n_replicates: int = 100
    seed: int = 0
    grid_size: int = 10201
    sampling: str = "grid"

    def __post_init__(self):
        if self.function not in TEST_FUNCTIONS and not callable(self.function):
            raise ConfigurationError(
                f"function must be one of {tuple(TEST_FUNCTIONS)} or a "
                f"callable, got {self.function!r}"
            )
        if not isinstance(self.noise, NoiseModel):
            raise ConfigurationError("noise must be a NoiseModel")
        if self.n < 1:
            raise ConfigurationError("sample size must be >= 1")
        if self.n_replicates < 1:
            raise ConfigurationError("replicate count must be >= 1")
        if self.sampling not in ("grid", "uniform"):
            raise ConfigurationError(
                f"sampling must be grid or uniform, got {self.sampling!r}"
            )
        degrees = tuple(int(d) for d in self.degrees)
        if not degrees:
            raise ConfigurationError("need at least one candidate degree")
        object.__setattr__(self, "degrees", degrees)

    @property
    def fixed_lambda(self) -> float | None:
        if self.lambdas is None or np.ndim(self.lambdas) > 0:
            return None
        return float(self.lambdas)

    def echo(self) -> dict:
        lam = self.lambdas
        if lam is not None and np.ndim(lam) > 0:
            lam = np.asarray(lam, dtype=float).tolist()
        name = self.function if isinstance(self.function, str) else getattr(
            self.function, "__name__", "custom"
        )
        return {
            "function": name,
            "noise": {"kind": self.noise.kind, "scale": self.noise.scale},
            "n": self.n,
            "mesh": {
                "n_vertices": self.mesh.n_vertices,
                "n_triangles": self.mesh.n_triangles,
            },
            "degrees": list(self.degrees),
            "smoothness": self.smoothness,
            "lambdas": lam,
            "folds": self.folds,
            "n_replicates": self.n_replicates,
            "seed": self.seed,
            "grid_size": self.grid_size,
            "sampling": self.sampling,
        }


@dataclass
class StudyReport:
    """Replicated-study outcome: per-replicate errors and selections (NaN
    where a replicate failed), their aggregates, and timing."""

    config: dict
    pmse: np.ndarray
    tmse: np.ndarray
    selected_degree: np.ndarray
    selected_lambda: np.ndarray
    seconds: np.ndarray
    n_failures: int
    baseline_pmse: float
    grid_points: int
    snr: float
    total_seconds: float
    failure_messages: list = field(default_factory=list)

    @property
    def mean_pmse(self) -> float:
        return float(np.nanmean(self.pmse))

    @property
    def sd_pmse(self) -> float:
        return float(np.nanstd(self.pmse, ddof=1))

    @property
    def mean_tmse(self) -> float:
        return float(np.nanmean(self.tmse))

    @property
    def sd_tmse(self) -> float:
        return float(np.nanstd(self.tmse, ddof=1))

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "replicates": {
                "pmse": self.pmse.tolist(),
                "tmse": self.tmse.tolist(),
                "selected_degree": self.selected_degree.tolist(),
                "selected_lambda": self.selected_lambda.tolist(),
                "seconds": self.seconds.tolist(),
            },
            "aggregates": {
                "mean_pmse": self.mean_pmse,
                "sd_pmse": self.sd_pmse,
                "mean_tmse": self.mean_tmse,
                "sd_tmse": self.sd_tmse,
                "baseline_pmse": self.baseline_pmse,
                "snr": self.snr,
            },
            "n_failures": self.n_failures,
            "failure_messages": self.failure_messages,
            "grid_points": self.grid_points,
            "total_seconds": self.total_seconds,
        }


def _replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Counter-based generator keyed by (study seed, replicate index)."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence([int(seed), int(replicate)]))
    )


def _uniform_on_domain(rng: np.random.Generator, mesh: TriMesh, n: int) -> np.ndarray:
    """Uniform points on the mesh domain by rejection from the sphere."""
    out = []
    have = 0
    attempts = 0
    while have < n:
        attempts += 1
        if attempts > 1000:
            raise SimulationError(
                "uniform sampling kept missing the domain; the patch appears "
                "to cover almost none of the sphere"
            )
        draw = rng.standard_normal((max(2 * (n - have), 64), 3))
        draw /= np.linalg.norm(draw, axis=1, keepdims=True)
        idx, _ = locate_many(mesh, draw)
        inside = draw[idx >= 0]
        if len(inside):
            out.append(inside[: n - have])
            have += len(out[-1])
    return np.concatenate(out, axis=0)


def _training_lattice(mesh: TriMesh, n: int) -> np.ndarray:
    """First n in-domain points of the smallest closed endpoint lattice that
    yields at least n.

    Training designs use the closed endpoint lattice: its repeated pole and
    seam rows reproduce the published whole-sphere error levels, which
    pole-free lattices consistently undershoot.  On a patch the lattice is
    grown until enough points fall inside, then truncated in lattice order,
    which keeps the design deterministic for any requested n.
    """
    side = int(math.ceil(math.sqrt(n)))
    while True:
        pts = make_grid("endpoint", side * side, domain=mesh)
        if len(pts) >= n:
            return pts[:n]
        grown = int(math.ceil(side * math.sqrt(n / max(len(pts), 1))))
        side = max(side + 1, grown)


def run_study(config: SimConfig, threads: int | None = None) -> StudyReport:
    """Run the replicated simulate / fit / evaluate study.

    Each replicate draws its design (fixed grid or fresh uniform points),
    adds heteroscedastic Gaussian noise, fits by the configured policy
    (direct fit, or cross-validation over the degree/penalty candidates),
    and records prediction errors against the true mean function on a fixed
    evaluation grid (PMSE) and at the training points (TMSE).  Failed
    replicates are recorded and skipped in the aggregates.
    """
    start = time.perf_counter()
    if threads is None:
        threads = int(os.environ.get("TSSS_THREADS", "1"))
    threads = max(1, threads)

    mesh = config.mesh
    fn = (
        TEST_FUNCTIONS[config.function]
        if isinstance(config.function, str)
        else config.function
    )
    grid = make_grid("latlong", config.grid_size, domain=mesh)
    if len(grid) < 2:
        raise ConfigurationError("evaluation grid has fewer than 2 points")
    truth_grid = np.asarray(fn(grid), dtype=float)
    study_snr = snr(config.function, config.noise, grid)

    fixed_design = None
    if config.sampling == "grid":
        fixed_design = _training_lattice(mesh, config.n)

    spaces = {
        d: ModelSpace.build(mesh, d, config.smoothness) for d in config.degrees
    }
    reps = config.n_replicates
    pmse = np.full(reps, np.nan)
    tmse = np.full(reps, np.nan)
    sel_d = np.full(reps, np.nan)
    sel_lam = np.full(reps, np.nan)
    seconds = np.zeros(reps)
    baselines = np.full(reps, np.nan)
    failures: list[tuple[int, str]] = []

    def one(rep: int):
        tic = time.perf_counter()
        rng = _replicate_rng(config.seed, rep)
        x = fixed_design if fixed_design is not None else _uniform_on_domain(
            rng, mesh, config.n
        )
        truth_x = np.asarray(fn(x), dtype=float)
        sd = np.broadcast_to(
            np.asarray(config.noise.sd(x), dtype=float), (len(x),)
        )
        y = truth_x + sd * rng.standard_normal(len(x))
        data = Dataset(x, y)
        if len(config.degrees) == 1 and config.fixed_lambda is not None:
            d, lam = config.degrees[0], config.fixed_lambda
        else:
            cv = kfold_cv(
                data,
                mesh,
                degrees=config.degrees,
                lambdas=config.lambdas,
                folds=config.folds,
                smoothness=config.smoothness,
                seed=[config.seed, rep, 1],
                spaces=spaces,
            )
            d, lam = cv.degree, cv.lam
        model = fit(
            data,
            FitConfig(mesh, d, config.smoothness, lam),
            space=spaces[d],
        )
        grid_hat = predict(model, grid)
        train_hat = predict(model, x)
        baseline = pmse_tmse(truth_grid, np.full(len(grid), y.mean()))
        return (
            rep,
            pmse_tmse(truth_grid, grid_hat),
            pmse_tmse(truth_x, train_hat, split="training"),
            d,
            lam,
            baseline,
            time.perf_counter() - tic,
        )

    def run_one(rep: int):
        try:
            return one(rep)
        except FitError as exc:
            return (rep, exc)

    if threads == 1:
        results = [run_one(rep) for rep in range(reps)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_one, range(reps)))

    for item in results:
        rep = item[0]
        if len(item) == 2:
            failures.append((rep, str(item[1])))
            continue
        _, p, t, d, lam, baseline, sec = item
        pmse[rep] = p
        tmse[rep] = t
        sel_d[rep] = d
        sel_lam[rep] = lam
        baselines[rep] = baseline
        seconds[rep] = sec

    if np.all(np.isnan(pmse)):
        raise SimulationError(
            f"every replicate failed; first failure: {failures[0][1]}"
        )
    return StudyReport(
        config=config.echo(),
        pmse=pmse,
        tmse=tmse,
        selected_degree=sel_d,
        selected_lambda=sel_lam,
        seconds=seconds,
        n_failures=len(failures),
        baseline_pmse=float(np.nanmean(baselines)),
        grid_points=len(grid),
        snr=study_snr,
        total_seconds=time.perf_counter() - start,
        failure_messages=[f"replicate {r}: {msg}" for r, msg in failures],
    )
