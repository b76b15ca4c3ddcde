import io
import math

import numpy as np
import pytest

from infolearn.bayes import (
    BayesianLinearModel,
    GaussianPosterior,
    exact_cumulative_info,
    expected_step_kl,
    posterior_update,
    predictive,
    simulate_regret,
)
from infolearn.dgp import LinRegSpec, ScalarEnvSpec
from infolearn.info import kl_gaussian
from infolearn.rng import derive_rng


def test_scalar_posterior_closed_form():
    # one observation of theta + noise at x = 1 shrinks the unit prior to
    # variance sigma2/(sigma2+1) and mean y/(sigma2+1)
    post = GaussianPosterior(1)
    post.update(np.array([1.0]), 2.0, 0.5)
    assert post.cov[0, 0] == pytest.approx(0.5 / 1.5)
    assert post.mean[0] == pytest.approx(2.0 / 1.5)


def test_posterior_matches_batch_least_squares():
    rng = derive_rng(20, "batch")
    d, sigma2, n = 5, 0.3, 40
    xs = rng.standard_normal((n, d))
    ys = rng.standard_normal(n)
    post = GaussianPosterior(d)
    for x, y in zip(xs, ys):
        post.update(x, y, sigma2)
    prec = np.eye(d) + xs.T @ xs / sigma2
    np.testing.assert_allclose(post.cov, np.linalg.inv(prec), atol=1e-10)
    np.testing.assert_allclose(post.mean, np.linalg.solve(prec, xs.T @ ys / sigma2), atol=1e-10)


def test_posterior_variance_monotone_decreasing():
    rng = derive_rng(21, "mono")
    post = GaussianPosterior(3)
    for _ in range(50):
        x = rng.standard_normal(3)
        before = np.trace(post.cov)
        post.update(x, float(rng.standard_normal()), 0.1)
        assert np.trace(post.cov) <= before + 1e-12


def test_refresh_keeps_posterior_consistent():
    # push past the periodic Cholesky refresh and compare to the exact form
    rng = derive_rng(22, "refresh")
    d, sigma2, n = 2, 0.5, 600
    xs = rng.standard_normal((n, d))
    ys = rng.standard_normal(n)
    post = GaussianPosterior(d)
    for x, y in zip(xs, ys):
        post.update(x, y, sigma2)
    prec = np.eye(d) + xs.T @ xs / sigma2
    np.testing.assert_allclose(post.cov, np.linalg.inv(prec), atol=1e-9)


def test_functional_update_leaves_original_untouched():
    post = GaussianPosterior(2)
    snapshot = post.cov.copy()
    out = posterior_update(post, np.array([1.0, 0.0]), 1.0, 1.0)
    np.testing.assert_array_equal(post.cov, snapshot)
    assert out.cov[0, 0] < 1.0


def test_update_rejects_nonfinite():
    post = GaussianPosterior(1)
    with pytest.raises(ValueError):
        post.update(np.array([np.nan]), 0.0, 1.0)
    with pytest.raises(ValueError):
        post.update(np.array([1.0]), math.inf, 1.0)


def test_predictive_moments():
    post = GaussianPosterior(2)
    x = np.array([3.0, 4.0])
    pred = predictive(post, x, 0.25)
    assert pred.mean == 0.0
    assert pred.variance == pytest.approx(0.25 + 25.0)


def test_expected_step_kl_formula():
    post = GaussianPosterior(1)
    val = expected_step_kl(post, np.array([1.0]), 0.1)
    assert val == pytest.approx(0.5 * math.log(11))


def test_telescoping_identity_paths():
    # sum of per-step expected KLs equals (1/2) ln det(I + X'X/sigma2)
    rng = derive_rng(23, "telescope")
    d, sigma2, T = 10, 0.1, 200
    for _ in range(10):
        xs = rng.standard_normal((T, d))
        post = GaussianPosterior(d)
        acc = 0.0
        for x in xs:
            acc += expected_step_kl(post, x, sigma2)
            post.update(x, 0.0, sigma2)
        assert acc == pytest.approx(exact_cumulative_info(xs, sigma2), abs=1e-8)


def test_exact_cumulative_info_empty():
    assert exact_cumulative_info(np.zeros((0, 3)), 1.0) == 0.0


def test_scalar_regret_first_step_exact():
    curve = simulate_regret(ScalarEnvSpec(0.1), 1, 1, derive_rng(24, "r1"))
    assert curve.step_mean[0] == pytest.approx(0.5 * math.log(11))


def test_scalar_regret_mc_agrees_with_analytic():
    rng = derive_rng(25, "mc")
    spec = ScalarEnvSpec(0.5)
    exact = simulate_regret(spec, 10, 1, rng)
    mc = simulate_regret(spec, 10, 200_000, rng, estimator="theta_mc")
    np.testing.assert_allclose(mc.step_mean, exact.step_mean, atol=4 * mc.step_se.max() + 1e-3)


def test_linreg_regret_estimators_agree():
    spec = LinRegSpec(3, 0.2)
    analytic = simulate_regret(spec, 30, 200, derive_rng(26, "a"))
    mc = simulate_regret(spec, 30, 4000, derive_rng(26, "b"), estimator="theta_mc")
    assert mc.total == pytest.approx(analytic.total, rel=0.05)


def test_regret_curve_csv_round_trip():
    curve = simulate_regret(ScalarEnvSpec(0.1), 5, 1, derive_rng(27, "csv"))
    buf = io.StringIO()
    curve.write_csv(buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "t,mean_step_kl,se,cumulative"
    assert len(lines) == 6
    last = lines[-1].split(",")
    assert float(last[3]) == pytest.approx(curve.total)


def test_estimator_wrapper_matches_posterior():
    rng = derive_rng(28, "skl")
    X = rng.standard_normal((20, 4))
    y = rng.standard_normal(20)
    model = BayesianLinearModel(4, 0.3).fit(X, y)
    post = GaussianPosterior(4)
    for xi, yi in zip(X, y):
        post.update(xi, yi, 0.3)
    np.testing.assert_allclose(model.predict(X[:3]), X[:3] @ post.mean, atol=1e-10)
    mean, std = model.predict(X[:3], return_std=True)
    pred = predictive(post, X[0], 0.3)
    assert std[0] == pytest.approx(math.sqrt(pred.variance))
    assert kl_gaussian(pred, pred) == 0.0
    with pytest.raises(ValueError):
        model.partial_fit(X[:, :2], y)
