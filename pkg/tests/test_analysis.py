import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from scri_scatter import analysis as an
from scri_scatter import scatter as sc
from scri_scatter.chart import ChartParams, inverse_metric_components
from scri_scatter.coeff import cutoff_b
from scri_scatter.errors import CFLViolation
from scri_scatter.nullgrid import ScriProfile


def test_lab_result_needs_five_points():
    with pytest.raises(ValueError):
        an.LabResult("x", "n", [1, 2, 3, 4], {})


def test_lab_result_csv_columns_and_digits():
    res = an.LabResult("x", "n", [1, 2, 3, 4, 5], {"y": [0.1, 0.2, 1 / 3, 0.4, 0.5], "flag": True, "short": [1, 2]})
    lines = res.to_csv().splitlines()
    assert lines[0] == "n,y"
    assert lines[3] == "3,0.33333333333333331"
    assert '"passed": false' in res.to_json()


@settings(max_examples=30, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(0.1, 10.0))
def test_loglog_fit_recovers_power_law(p, c):
    x = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
    fit = an.loglog_fit(x, c * x ** p)
    assert fit["exponent"] == pytest.approx(p, abs=1e-9)
    assert fit["constant"] == pytest.approx(c, rel=1e-9)
    assert fit["residual"] < 1e-9


def test_sobolev_constant_family_matches_closed_form():
    # u = 1 on the ball of radius t: ratio = (4π/3)^(-1/3) / t
    res = an.sobolev_cone_lab([0.1, 0.2, 0.5, 1.0, 2.0, 5.0])
    const = float(sp.N((4 * sp.pi / 3) ** sp.Rational(-1, 3), 20))
    assert res.passed
    assert res.fit["exponent"] == pytest.approx(-1.0, abs=1e-9)
    assert res.fit["constant"] == pytest.approx(const, rel=1e-9)
    assert res.measured["weighted_spread"] == pytest.approx(1.0, abs=1e-9)


def test_sobolev_bump_family_and_decade_check():
    res = an.sobolev_cone_lab([0.1, 0.3, 1.0, 3.0, 10.0], family="bump")
    assert res.passed and res.measured["weighted_spread"] <= 2.0
    with pytest.raises(ValueError):
        an.sobolev_cone_lab([1.0, 2.0, 3.0, 4.0, 5.0])


def test_density_profile_plateaus():
    s = np.array([0.0, 0.2, 1 / 3, 0.5, 0.7, 3.0])
    f = an.density_profile(s)
    assert np.allclose(f[:3], 0.0) and np.allclose(f[3:], 1.0)


def test_density_lab_decay():
    res = an.density_cutoff_lab([2, 4, 8, 16, 32, 64])
    assert res.passed
    assert res.measured["monotone"] and res.measured["bound_ok"]
    assert res.fit["exponent"] == pytest.approx(-0.5, abs=0.01)


def test_random_profiles_are_seeded_and_supported():
    u = np.linspace(-80.0, 0.0, 161)
    a = an.random_profiles(u, 3, 7, (-60.0, -30.0), 0.1)
    b = an.random_profiles(u, 3, 7, (-60.0, -30.0), 0.1)
    c = an.random_profiles(u, 3, 8, (-60.0, -30.0), 0.1)
    assert all(np.array_equal(x.theta, y.theta) for x, y in zip(a, b))
    assert not np.array_equal(a[0].theta, c[0].theta)
    outside = (u < -60) | (u > -30)
    assert all(np.all(p.theta[outside] == 0) and np.max(np.abs(p.theta)) <= 0.3 for p in a)


def test_lipschitz_ratio_is_scale_invariant_for_linear_maps(scatter_params):
    u = np.linspace(-80.0, 100.0, 385)
    cfg = sc.ScatterConfig(dr=0.12, NR=385, NR_extract=129)
    pool = an.random_profiles(u, 6, 0, (-52.0, -28.0), 0.1)
    pairs = [(pool[i], pool[i + 1]) for i in range(5)]
    scaled = [(p.with_theta(3 * p.theta), q.with_theta(3 * q.theta)) for p, q in pairs]
    r1 = an.lipschitz_lab(pairs, "T+0", None, scatter_params, cfg)
    r2 = an.lipschitz_lab(scaled, "T+0", None, scatter_params, cfg)
    assert r1.passed and r2.passed
    assert np.allclose(r1.measured["ratio"], r2.measured["ratio"], rtol=1e-10)
    # a profile paired with itself is skipped
    with pytest.raises(ValueError):
        an.lipschitz_lab([(pool[0], pool[0])] * 5, "T+0", None, scatter_params, cfg)


def test_slowed_metric_reduces_at_lambda_one():
    params = ChartParams(m=1.0, R_max=0.4)
    x = np.linspace(0.0, 0.4, 9)
    _, guR, gRR = inverse_metric_components(x, params)
    gtt, gtx, gxx = an.slowed_inverse_metric(x, 1.0, 1.0)
    # t' = u - R, x = R
    assert np.allclose(gtt, -2 * guR + gRR)
    assert np.allclose(gtx, guR - gRR)
    assert np.allclose(gxx, gRR)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.51, 0.99), st.floats(0.0, 0.4))
def test_slowed_metric_volume_density(lam, x):
    gtt, gtx, gxx = an.slowed_inverse_metric(x, lam, 1.0)
    assert gtt * gxx - gtx ** 2 == pytest.approx(-1.0 / lam ** 2, rel=1e-10)


def test_slowed_slope_rejects_lambda_one():
    with pytest.raises(CFLViolation):
        an.slowed_max_slope(0.1, 1.0, 1.0)
    assert an.slowed_max_slope(0.1, 0.9, 1.0) > 0


def test_slowdown_zero_data_gives_zero():
    params = ChartParams(m=1.0, R_max=0.4)
    u = np.linspace(-60.0, -20.0, 201)
    th = ScriProfile(u, np.zeros_like(u), 0)
    res = an.slowdown_lab(th, [0.6, 0.7, 0.8, 0.9, 0.95], None, params, NR=129)
    assert res.passed
    assert res.measured["l2_difference"] == [0.0] * 5
    with pytest.raises(ValueError):
        an.slowdown_lab(th, [0.9, 0.8, 0.7, 0.6, 0.55], None, params, NR=129)


def test_cardano_check_is_tight():
    assert an.cardano_check(200, seed=1) < 1e-12


def test_picard_lab_small_data():
    params = ChartParams(m=1.0, R_max=0.1)
    u = np.linspace(-80.0, 0.0, 201)
    th = an.random_profiles(u, 1, 3, (-60.0, -30.0), 1.0)[0]
    res = an.picard_lab(th, cutoff_b(1.0, 0.01, 0.02), params, [0.005, 0.01, 0.015, 0.02, 0.03], NR=129)
    assert res.passed
    assert all(res.measured["predicted"])
    assert all(r < 1 for r in res.measured["max_ratio"])
    beta = np.array(res.measured["beta"])
    assert np.allclose(beta / beta[0], (np.array(res.sweep) / 0.005) ** 2, rtol=1e-10)
    assert all(math.isfinite(v) for v in res.measured["lambda2"])
