import numpy as np
import pytest

from infolearn.dgp import (
    DirichletNetSpec,
    IndepNetSpec,
    LinRegSpec,
    ScalarEnvSpec,
    TeacherNetwork,
    multinomial_quantize_bound,
    multinomial_quantize_bound_conservative,
    multinomial_quantize_rows,
    sample_batch,
    sample_env,
    sample_pair,
    signed_dirichlet_rows,
    teacher_forward,
    unit_sphere_rows,
)
from infolearn.rng import derive_rng


def test_scalar_prior_unit_variance():
    rng = derive_rng(0, "scalar")
    thetas = np.array([sample_env(ScalarEnvSpec(0.1), rng) for _ in range(200_000)])
    assert abs(thetas.var() - 1.0) < 0.02
    assert abs(thetas.mean()) < 0.02


def test_indep_net_weight_variances():
    rng = derive_rng(1, "indep")
    spec = IndepNetSpec(d=4, N=8, K=2, sigma2=0.01)
    a1 = np.concatenate([sample_env(spec, rng).weights[0].ravel() for _ in range(2000)])
    assert abs(a1.var() - 1 / 4) < 0.02 * (1 / 4) * 4  # 2% of scale, loose factor
    a2 = np.concatenate([sample_env(spec, rng).weights[1].ravel() for _ in range(1000)])
    assert abs(a2.var() - 1 / 8) < 0.02 * (1 / 8) * 4


def test_indep_net_bias_dim_variance():
    rng = derive_rng(2, "bias")
    spec = IndepNetSpec(d=3, N=16, K=1, sigma2=0.01, include_bias_dim=True)
    net = sample_env(spec, rng)
    assert net.weights[0].shape == (16, 4)
    flat = np.concatenate(
        [sample_env(spec, rng).weights[0].ravel() for _ in range(3000)]
    )
    assert abs(flat.var() - 1 / 4) < 0.01
    b = np.concatenate([sample_env(spec, rng).weights[-1].ravel() for _ in range(3000)])
    assert abs(b.var() - 1 / 16) < 0.005


def test_dirichlet_rows_abs_sum():
    rng = derive_rng(3, "dir")
    spec = DirichletNetSpec(d=3, M=4, N=32, K=2, sigma2=0.01)
    net = sample_env(spec, rng)
    for b in net.weights[1::2]:
        np.testing.assert_allclose(np.abs(b).sum(axis=1), np.sqrt(4), atol=1e-9)


def test_dirichlet_sign_frequency():
    rng = derive_rng(4, "signs")
    rows = signed_dirichlet_rows(2000, 16, 0.25, 1.0, rng)
    frac_neg = (rows < 0).mean()
    assert abs(frac_neg - 0.5) < 0.02


def test_dirichlet_small_shape_no_degenerate_rows():
    rng = derive_rng(5, "small")
    rows = signed_dirichlet_rows(500, 1024, 1 / 1024, 1.0, rng)
    sums = np.abs(rows).sum(axis=1)
    np.testing.assert_allclose(sums, 1.0, atol=1e-9)
    assert np.all(np.isfinite(rows))


def test_unit_sphere_rows_norm():
    rng = derive_rng(6, "sphere")
    rows = unit_sphere_rows(1000, 5, rng)
    np.testing.assert_allclose(np.linalg.norm(rows, axis=1), 1.0, atol=1e-9)


def test_appendix_teacher_sphere_rows():
    rng = derive_rng(7, "teach")
    spec = DirichletNetSpec(d=4, M=2, N=16, K=1, sigma2=0.01, unit_sphere_rows=True)
    net = sample_env(spec, rng)
    np.testing.assert_allclose(np.linalg.norm(net.weights[0], axis=1), 1.0, atol=1e-9)


def test_sample_pair_linreg_moment():
    rng = derive_rng(8, "pair")
    theta = np.array([1.0, 0.0])
    x, y, f = sample_batch(theta, 1.0, 400_000, rng)
    assert abs((y * x[:, 0]).mean() - 1.0) < 0.02
    np.testing.assert_allclose(f, x @ theta)


def test_sample_pair_noise_variance():
    rng = derive_rng(9, "noise")
    net = sample_env(IndepNetSpec(d=2, N=4, K=1, sigma2=0.25), rng)
    x, y, f = sample_batch(net, 0.25, 200_000, rng)
    assert abs((y - f).var() - 0.25) < 0.01


def test_teacher_forward_hand_case():
    net = TeacherNetwork(
        prior="independent",
        weights=[np.eye(2), np.ones((1, 2))],
    )
    assert teacher_forward(net, np.array([1.0, -1.0])) == pytest.approx(1.0)
    out, trace = teacher_forward(net, np.array([1.0, -1.0]), return_trace=True)
    assert len(trace) == 3
    np.testing.assert_allclose(trace[1], [1.0, 0.0])


def test_teacher_forward_zero_weights():
    net = TeacherNetwork(prior="independent", weights=[np.zeros((3, 2)), np.zeros((1, 3))])
    assert teacher_forward(net, np.array([5.0, -2.0])) == 0.0


def test_teacher_hidden_activations_nonnegative():
    rng = derive_rng(10, "relu")
    net = sample_env(IndepNetSpec(d=3, N=8, K=3, sigma2=0.01), rng)
    _, trace = teacher_forward(net, rng.standard_normal(3), return_trace=True)
    for u in trace[1:-1]:
        assert np.all(u >= 0)


def test_teacher_json_round_trip_bit_exact():
    rng = derive_rng(11, "json")
    net = sample_env(DirichletNetSpec(d=3, M=2, N=8, K=2, sigma2=0.01), rng)
    net.seed = 11
    clone = TeacherNetwork.from_json(net.to_json())
    assert clone.prior == net.prior
    assert clone.seed == 11
    for w1, w2 in zip(net.weights, clone.weights):
        assert np.array_equal(w1, w2)  # bit-exact
    x = rng.standard_normal(3)
    assert teacher_forward(clone, x) == teacher_forward(net, x)


def test_quantize_one_hot_exact():
    rng = derive_rng(12, "q")
    a = np.zeros((2, 5))
    a[0, 1] = 1.0
    a[1, 3] = -1.0
    for r in (1, 7):
        np.testing.assert_array_equal(multinomial_quantize_rows(a, r, rng, c=1.0), a)


def test_quantize_mean_converges():
    rng = derive_rng(13, "qmean")
    a = signed_dirichlet_rows(1, 6, 0.5, 2.0, rng)  # c = 4
    reps = np.stack([multinomial_quantize_rows(a, 64, rng, c=4.0) for _ in range(10_000)])
    np.testing.assert_allclose(reps.mean(axis=0), a, atol=0.02)


def test_quantize_rejects_off_simplex():
    rng = derive_rng(14, "qbad")
    with pytest.raises(ValueError):
        multinomial_quantize_rows(np.array([[0.3, 0.3]]), 4, rng, c=1.0)


def _quantize_mse_mc(a, r, c, rng, n_mc=20_000, n_quant=200):
    n = a.shape[1]
    at = np.stack([multinomial_quantize_rows(a, r, rng, c=c) for _ in range(n_quant)])
    x = rng.standard_normal((n_mc, n))
    errs = np.empty(n_mc)
    for i in range(n_mc):  # pair each X with a quantization draw (cycled)
        diff = (a - at[i % n_quant]) @ x[i]
        errs[i] = diff @ diff
    return errs.mean(), errs.std(ddof=1) / np.sqrt(n_mc)


@pytest.mark.parametrize("m,n,r", [(4, 64, 16), (8, 256, 64)])
def test_quantize_mse_bound_unit_mass(m, n, r):
    # rows with unit absolute mass (c=1): E||AX - A~X||^2 <= sqrt(c) M / r
    rng = derive_rng(15, "qmse", m, n, r)
    a = signed_dirichlet_rows(m, n, m / n, 1.0, rng)
    mean, se = _quantize_mse_mc(a, r, 1.0, rng)
    assert mean <= multinomial_quantize_bound(m, n, r, 1.0) + 3 * se


@pytest.mark.parametrize("m,n,r", [(4, 64, 16), (8, 256, 64)])
def test_quantize_mse_bound_conservative(m, n, r):
    # heavier rows (c=M) obey the conservative bound c M / r
    rng = derive_rng(15, "qmse2", m, n, r)
    c = float(m)
    a = signed_dirichlet_rows(m, n, m / n, np.sqrt(c), rng)
    mean, se = _quantize_mse_mc(a, r, c, rng)
    assert mean <= multinomial_quantize_bound_conservative(m, n, r, c) + 3 * se


def test_sample_pair_record():
    rng = derive_rng(16, "dp")
    pair = sample_pair(np.array([2.0]), 0.5, rng)
    assert pair.x.shape == (1,)
    assert pair.f == pytest.approx(2.0 * pair.x[0])


def test_spec_validation():
    with pytest.raises(ValueError):
        ScalarEnvSpec(0.0)
    with pytest.raises(ValueError):
        LinRegSpec(0, 1.0)
    with pytest.raises(ValueError):
        DirichletNetSpec(d=2, M=8, N=4)
