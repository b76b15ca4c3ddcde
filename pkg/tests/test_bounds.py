import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infolearn import bounds
from infolearn.bounds import (
    Bracket,
    VacuousBound,
    entropy_bounds,
    linreg_proxy_delta2,
    linreg_rd,
    linreg_rd_upper_curve,
    linreg_t_eps,
    multilayer_compose,
    multilayer_distortion,
    network_bounds,
    proxy_check,
    regret_bracket,
    sample_complexity_bracket,
    scalar_proxy_delta2,
    scalar_r1,
    scalar_rd,
    scalar_rd_curve,
    single_layer_rd,
    single_layer_rd_curve,
    stability,
    stability_mc,
)
from infolearn.rng import derive_rng


def test_scalar_rd_spot_value():
    assert scalar_rd(0.1, 0.01) == pytest.approx(3.1023, abs=1e-3)


def test_scalar_rd_vanishes_at_first_step_regret():
    r1 = scalar_r1(0.1)
    assert scalar_rd(0.1, r1 * (1 - 1e-9)) == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(VacuousBound):
        scalar_rd(0.1, r1 * 1.01)


def test_scalar_rd_entropy_prefactor_is_tight_for_gaussian():
    # supplying the Gaussian entropy must reproduce the exact value
    h_gauss = 0.5 * math.log(2 * math.pi * math.e)
    assert scalar_rd(0.1, 0.01, h_theta=h_gauss) == pytest.approx(
        scalar_rd(0.1, 0.01), rel=1e-12
    )
    # a lower-entropy theta can only need more rate
    assert scalar_rd(0.1, 0.01, h_theta=h_gauss - 0.5) > scalar_rd(0.1, 0.01)


@given(st.floats(0.01, 10), st.floats(1e-6, 0.99))
@settings(max_examples=60)
def test_scalar_rd_monotone_decreasing_in_eps(sigma2, frac):
    r1 = scalar_r1(sigma2)
    e1, e2 = frac * r1 * 0.5, frac * r1
    assert scalar_rd(sigma2, e1) >= scalar_rd(sigma2, e2)


def test_entropy_caps():
    caps = entropy_bounds(2.0, 0.3)
    assert caps.regret_cap == 2.0
    assert caps.t_cap == 7
    assert not caps.vacuous
    assert entropy_bounds(math.inf, 0.3).vacuous
    with pytest.raises(ValueError):
        entropy_bounds(1.0, 0.0)


def test_regret_bracket_contains_scalar_regret():
    # the true scalar cumulative regret must lie inside the bracket
    from infolearn.bayes import simulate_regret
    from infolearn.dgp import ScalarEnvSpec

    for sigma2 in (0.1, 1.0):
        h = scalar_rd_curve(sigma2)
        for big_t in (1, 10, 100):
            true = simulate_regret(ScalarEnvSpec(sigma2), big_t, 1, None).total
            br = regret_bracket(h, big_t)
            assert br.lower <= true + 1e-9
            assert true <= br.upper + 1e-9


def test_sample_complexity_bracket_scalar():
    br = sample_complexity_bracket(scalar_rd_curve(0.1), 0.1)
    assert br.lower == pytest.approx(19.05, abs=0.05)
    assert br.upper == 35
    assert br.meta["loose_cap"] == 46
    assert br.lower <= br.upper <= br.meta["loose_cap"]


def test_bracket_validation():
    with pytest.raises(ValueError):
        Bracket(2.0, 1.0)


def test_linreg_rd_sides_and_domains():
    both = linreg_rd(10, 0.1, 1e-3)
    assert both.lower is not None and both.upper is not None
    assert both.lower <= both.upper
    # small d disables the lower side; huge eps disables the upper side
    assert linreg_rd(2, 0.1, 1e-3).lower is None
    assert linreg_rd(4, 1.0, 5.0).upper is None
    with pytest.raises(ValueError):
        linreg_rd(0, 0.1, 0.01)


def test_linreg_t_eps_spot_values():
    br = linreg_t_eps(10, 0.1, 0.01)
    assert br.lower == pytest.approx(1261.6, abs=1.0)
    assert br.upper == pytest.approx(9210.3, abs=1.0)
    with pytest.raises(VacuousBound):
        linreg_t_eps(2, 0.1, 0.01)
    with pytest.raises(VacuousBound):
        linreg_t_eps(10, 0.1, 0.5)


def test_linreg_upper_curve_domain():
    h = linreg_rd_upper_curve(5, 0.1)
    assert h.eps_max == pytest.approx(0.5 * math.log1p(50))
    with pytest.raises(VacuousBound):
        h(h.eps_max * 1.001)
    assert h(1e-3) > 0


def test_single_layer_rd_values_and_vacuity():
    assert single_layer_rd("independent", 0.1, 0.05, d=2, N=4) == pytest.approx(
        23.9659, abs=1e-3
    )
    with pytest.raises(VacuousBound):
        single_layer_rd("independent", 1.0, 100.0, d=2, N=4)
    thm = single_layer_rd("dirichlet", 0.1, 0.05, d=3, M=2)
    cor = single_layer_rd("dirichlet", 0.1, 0.05, d=3, M=2, form="corollary")
    assert thm == pytest.approx(3 * cor, rel=1e-12)
    with pytest.raises(ValueError):
        single_layer_rd("unknown", 0.1, 0.05)


def test_multilayer_compose_additivity():
    h1 = single_layer_rd_curve("independent", 0.1, d=2, N=4)
    h2 = single_layer_rd_curve("independent", 0.1, d=4, N=4)
    total = multilayer_compose([h1, h2], 0.1)
    assert total == pytest.approx(h1(0.05) + h2(0.05))


def test_network_bounds_spot_values():
    nb = network_bounds("independent", 0.1, 0.1, d=16, N=16, K=2)
    assert nb.h == pytest.approx(1768.385, abs=1e-2)
    nb2 = network_bounds("dirichlet", 0.1, 0.1, d=4, M=4, K=3)
    assert nb2.h == pytest.approx(8884.33, abs=0.1)
    assert nb.t_eps > nb.h and nb2.t_eps > 0
    with pytest.raises(VacuousBound):
        network_bounds("independent", 10.0, 10.0, d=2, N=2, K=1)


def test_stability_constants():
    ind = stability(("independent", 4, 8))
    assert ind.L == pytest.approx(2.0)
    dir_ = stability(("dirichlet", 16, 1, 2))
    assert dir_.L == pytest.approx(1 * 2 * 18 / (3 * 256))
    assert dir_.bound == pytest.approx(1 / 16)  # M^2 <= N so the cap applies
    assert stability(("dirichlet", 4, 1, 4)).bound is None
    explicit = stability(np.diag([0.5, 2.0]))
    assert explicit.L == 2.0


def test_stability_mc_below_constant():
    rng = derive_rng(40, "stab")
    for d_in, d_out in ((2, 2), (4, 8), (8, 4)):
        mean, se = stability_mc(d_in, d_out, 40_000, rng)
        assert mean <= (d_out / d_in) * 1.05 + 3 * se


def test_multilayer_distortion():
    assert multilayer_distortion([1.0], 0.0, 0.1) == 0.0
    val = multilayer_distortion([2.0, 0.5], 0.3, 0.1)
    assert val == pytest.approx(0.5 * math.log1p(3.0))
    with pytest.raises(ValueError):
        multilayer_distortion([1.0], -1.0, 0.1)


def test_proxy_delta2_domains():
    assert scalar_proxy_delta2(0.1, 0.05).delta2 > 0
    with pytest.raises(VacuousBound):
        scalar_proxy_delta2(1.0, 2.0)
    assert linreg_proxy_delta2(5, 0.1, 0.05).delta2 > 0
    with pytest.raises(VacuousBound):
        linreg_proxy_delta2(1, 1.0, 2.0)


def test_proxy_check_scalar_and_linreg():
    rng = derive_rng(41, "proxy")
    rep = proxy_check("scalar", 0.1, 0.05, 100_000, rng)
    assert rep.satisfied
    assert rep.rate_cap > 0
    rep2 = proxy_check("linreg", 0.1, 0.05, 100_000, rng, d=5)
    assert rep2.satisfied
    with pytest.raises(ValueError):
        proxy_check("tree", 0.1, 0.05, 10, rng)


@given(st.floats(0.02, 2.0), st.integers(1, 500))
@settings(max_examples=40, deadline=None)
def test_regret_bracket_ordering_property(sigma2, big_t):
    br = regret_bracket(scalar_rd_curve(sigma2), big_t)
    assert br.lower <= br.upper
    assert br.lower >= 0
