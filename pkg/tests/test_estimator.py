import math

import numpy as np
import pytest

from tsss.errors import ConfigurationError, PredictionError
from tsss.estimator import (
    BootstrapResult,
    Dataset,
    FitConfig,
    ModelSpace,
    bootstrap_se,
    cv_folds,
    default_lambda_grid,
    fit,
    kfold_cv,
    pmse_tmse,
    predict,
)
from tsss.mesh import base_mesh, refine, submesh
from tsss.simulation import make_grid


OCTA = base_mesh("octahedron")
_SPACES: dict = {}


def octa_space(d):
    # The constraint/penalty build is the expensive part; share it.
    if d not in _SPACES:
        _SPACES[d] = ModelSpace.build(OCTA, d, 1)
    return _SPACES[d]


def affine_data(n=500, a=(0.7, -0.3, 0.4), c=1.2, noise=0.0, seed=0):
    # a.x + c lies exactly in every mixed model space with d >= 2.
    pts = make_grid("fibonacci", n)
    rng = np.random.default_rng(seed)
    y = pts @ np.asarray(a) + c + noise * rng.standard_normal(n)
    return Dataset(pts, y)


def test_dataset_validation():
    pts = make_grid("fibonacci", 10)
    with pytest.raises(ConfigurationError):
        Dataset(pts, np.zeros(9))
    with pytest.raises(ConfigurationError):
        Dataset(pts[:, :2], np.zeros(10))
    with pytest.raises(ConfigurationError):
        Dataset(2.0 * pts, np.zeros(10))
    bad = pts.copy()
    bad[3, 0] = np.nan
    with pytest.raises(ConfigurationError):
        Dataset(bad, np.zeros(10))
    with pytest.raises(ConfigurationError):
        Dataset(pts, np.full(10, np.inf))
    data = Dataset(pts, np.arange(10.0))
    assert data.n == 10
    assert np.allclose(np.linalg.norm(data.locations, axis=1), 1.0, atol=1e-14)


def test_fit_config_validation():
    with pytest.raises(ConfigurationError):
        FitConfig(OCTA, 3, 3)
    with pytest.raises(ConfigurationError):
        FitConfig(OCTA, 3, 1, -0.5)
    with pytest.raises(ConfigurationError):
        FitConfig(OCTA, 3, 1, np.nan)


def test_fit_recovers_function_in_model_space():
    data = affine_data()
    model = fit(data, FitConfig(OCTA, 3, 1, 0.0), space=octa_space(3))
    assert model.diagnostics["rss"] < 1e-14
    query = make_grid("fibonacci", 321)
    truth = query @ np.array([0.7, -0.3, 0.4]) + 1.2
    assert np.max(np.abs(predict(model, query) - truth)) < 1e-8
    assert model.diagnostics["kkt_residual"] < 1e-6
    assert model.diagnostics["n"] == data.n


def test_fit_requires_dataset():
    with pytest.raises(ConfigurationError):
        fit(np.zeros((10, 3)), FitConfig(OCTA, 2))


def test_lambda_monotonicity():
    # Raising the penalty weight trades data fit for flatness.
    data = affine_data(noise=0.5, seed=1)
    rss = []
    energy = []
    space = octa_space(3)
    for lam in (0.0, 0.1, 10.0, 1000.0):
        model = fit(data, FitConfig(OCTA, 3, 1, lam), space=space)
        rss.append(model.diagnostics["rss"])
        energy.append(model.diagnostics["energy"])
    assert rss == sorted(rss)
    assert energy == sorted(energy, reverse=True)


def test_fit_scaling_equivariance():
    # The solution map is linear in the responses.
    data = affine_data(noise=0.4, seed=2)
    space = octa_space(3)
    config = FitConfig(OCTA, 3, 1, 2.5)
    base = fit(data, config, space=space)
    scaled = fit(Dataset(data.locations, 3.0 * data.responses), config, space=space)
    assert np.allclose(scaled.coefficients, 3.0 * base.coefficients, atol=1e-10)


def test_fit_space_mismatch():
    data = affine_data(n=100)
    space = octa_space(2)
    with pytest.raises(ConfigurationError):
        fit(data, FitConfig(OCTA, 3, 1), space=space)


def test_predict_outside_domain():
    patch = submesh(OCTA, [0])
    inside = make_grid("fibonacci", 600)
    keep = np.all(inside > 0.05, axis=1)
    data = Dataset(inside[keep], np.ones(int(keep.sum())))
    model = fit(data, FitConfig(patch, 2, 1, 1.0))
    query = np.array([[0.0, 0.0, -1.0], data.locations[0]])
    with pytest.raises(PredictionError) as err:
        predict(model, query)
    assert list(err.value.indices) == [0]
    assert np.isnan(err.value.values[0]) and np.isfinite(err.value.values[1])
    out = predict(model, query, on_missing="nan")
    assert np.isnan(out[0]) and np.isfinite(out[1])


def test_default_lambda_grid():
    grid = default_lambda_grid(400, 32)
    assert len(grid) == 10
    assert np.isclose(grid[0], 1e-6 * 400 / 32)
    assert np.isclose(grid[-1], 1e3 * 400 / 32)
    ratios = grid[1:] / grid[:-1]
    assert np.allclose(ratios, ratios[0])
    with pytest.raises(ConfigurationError):
        default_lambda_grid(0, 32)


def test_cv_folds_partition_and_determinism():
    parts = cv_folds(103, 5, 7)
    again = cv_folds(103, 5, 7)
    other = cv_folds(103, 5, 8)
    assert all(np.array_equal(a, b) for a, b in zip(parts, again))
    assert not all(np.array_equal(a, b) for a, b in zip(parts, other))
    assert sorted(np.concatenate(parts).tolist()) == list(range(103))
    sizes = [len(p) for p in parts]
    assert max(sizes) - min(sizes) <= 1
    with pytest.raises(ConfigurationError):
        cv_folds(10, 1, 0)
    with pytest.raises(ConfigurationError):
        cv_folds(3, 4, 0)


def test_kfold_cv_matches_leave_one_out_refits():
    # With folds = n the score is the sum of squared leave-one-out errors,
    # which a brute-force loop of refits reproduces.
    rng = np.random.default_rng(3)
    n = 40
    pts = make_grid("fibonacci", n)
    y = pts @ np.array([0.5, 0.2, -0.8]) + 1.0 + 0.3 * rng.standard_normal(n)
    data = Dataset(pts, y)
    lambdas = np.array([0.5, 5.0])
    space = octa_space(2)
    res = kfold_cv(data, OCTA, degrees=(2,), lambdas=lambdas, folds=n, seed=11,
                   spaces={2: space})
    for li, lam in enumerate(lambdas):
        total = 0.0
        for i in range(n):
            keep = np.arange(n) != i
            model = fit(
                Dataset(pts[keep], y[keep]),
                FitConfig(OCTA, 2, 1, lam),
                space=space,
            )
            total += float((y[i] - predict(model, pts[i])) ** 2)
        assert np.isclose(res.scores[0, li], total, rtol=1e-8)
    chosen = lambdas[np.argmin(res.scores[0])]
    assert res.lam == chosen
    assert res.degree == 2


def test_kfold_cv_selection_and_table_shape():
    data = affine_data(n=200, noise=0.3, seed=4)
    grid = default_lambda_grid(200, OCTA.n_triangles, size=4)
    spaces = {2: octa_space(2), 3: octa_space(3)}
    res = kfold_cv(data, OCTA, degrees=(2, 3), lambdas=grid, folds=5, seed=0,
                   spaces=spaces)
    assert res.scores.shape == (2, 4)
    assert np.all(np.isfinite(res.scores))
    di = res.degrees.index(res.degree)
    li = int(np.nonzero(np.isclose(res.lambdas, res.lam))[0][0])
    assert np.isclose(res.scores[di, li], res.scores.min())
    # The selection is reproducible for a fixed seed.
    res2 = kfold_cv(data, OCTA, degrees=(2, 3), lambdas=grid, folds=5, seed=0,
                    spaces=spaces)
    assert (res2.degree, res2.lam) == (res.degree, res.lam)
    assert np.array_equal(res2.scores, res.scores)


def test_kfold_cv_per_degree_grids():
    data = affine_data(n=150, noise=0.3, seed=5)
    res = kfold_cv(
        data,
        OCTA,
        degrees=(2, 3),
        lambdas=[np.array([0.1, 1.0, 10.0]), np.array([2.0])],
        folds=4,
        seed=1,
        spaces={2: octa_space(2), 3: octa_space(3)},
    )
    assert isinstance(res.lambdas, list)
    assert res.scores.shape == (2, 3)
    assert np.isinf(res.scores[1, 1]) and np.isinf(res.scores[1, 2])
    with pytest.raises(ConfigurationError):
        kfold_cv(data, OCTA, degrees=(2, 3), lambdas=[np.array([0.1])], folds=4)
    with pytest.raises(ConfigurationError):
        kfold_cv(data, OCTA, degrees=(2,), lambdas=np.array([-1.0]), folds=4)
    with pytest.raises(ConfigurationError):
        kfold_cv(data, OCTA, degrees=(), folds=4)


def test_mammen_weight_moments():
    # The two-point residual multipliers have mean 0 and second and third
    # moments equal to 1, the defining property of the wild bootstrap.
    from tsss.estimator import _DELTA_HIGH, _DELTA_LOW, _PROB_LOW

    p = _PROB_LOW
    assert math.isclose(p, (5 + math.sqrt(5)) / 10, rel_tol=1e-15)
    for k, expected in ((1, 0.0), (2, 1.0), (3, 1.0)):
        moment = p * _DELTA_LOW**k + (1 - p) * _DELTA_HIGH**k
        assert math.isclose(moment, expected, abs_tol=1e-14)


def test_bootstrap_determinism_and_threads():
    data = affine_data(n=300, noise=0.5, seed=6)
    config = FitConfig(OCTA, 2, 1, 1.0)
    query = make_grid("fibonacci", 25)
    space = octa_space(2)
    a = bootstrap_se(data, config, query, 16, seed=99, space=space)
    b = bootstrap_se(data, config, query, 16, seed=99, space=space)
    c = bootstrap_se(data, config, query, 16, seed=99, space=space, threads=4)
    d = bootstrap_se(data, config, query, 16, seed=100, space=space)
    assert isinstance(a, BootstrapResult) and a.n_replicates == 16
    assert np.array_equal(a.se, b.se)
    assert np.array_equal(a.se, c.se)
    assert not np.array_equal(a.se, d.se)
    assert np.all(a.se >= 0)


def test_bootstrap_zero_noise_gives_zero_se():
    data = affine_data(n=300, noise=0.0)
    config = FitConfig(OCTA, 2, 1, 0.0)
    query = make_grid("fibonacci", 10)
    res = bootstrap_se(data, config, query, 8, seed=0, space=octa_space(2))
    assert np.max(res.se) < 1e-9


def test_bootstrap_validation():
    data = affine_data(n=100, noise=0.1)
    config = FitConfig(OCTA, 2, 1, 1.0)
    query = make_grid("fibonacci", 5)
    with pytest.raises(ConfigurationError):
        bootstrap_se(data, config, query, 1, seed=0, space=octa_space(2))
    with pytest.raises(ConfigurationError):
        bootstrap_se(data, config, query, 8, seed=0, ddof=2, space=octa_space(2))
    patch_config = FitConfig(submesh(OCTA, [0]), 2, 1, 1.0)
    inside = data.locations[np.all(data.locations > 0.05, axis=1)]
    patch_data = Dataset(inside, np.ones(len(inside)))
    with pytest.raises(PredictionError):
        bootstrap_se(patch_data, patch_config, query, 8, seed=0)


def test_pmse_tmse():
    truth = np.array([1.0, 2.0, 3.0])
    est = np.array([1.0, 2.5, 2.0])
    assert pmse_tmse(truth, est) == pytest.approx((0.25 + 1.0) / 3)
    assert pmse_tmse(truth, truth, split="training") == 0.0
    with pytest.raises(ConfigurationError):
        pmse_tmse(truth, est, split="holdout")
    with pytest.raises(ConfigurationError):
        pmse_tmse(truth, est[:2])
