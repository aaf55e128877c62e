import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from scri_scatter.chart import (
    ChartParams,
    chart_audit,
    curvature_term,
    identifying_field,
    leaf_R,
    metric_components,
    morawetz_norm_sq,
    morawetz_null_roots,
    r_of_rstar,
    rstar_of_r,
    s_of_point,
    s_of_tau,
    sigma0_R,
    tau_of_s,
)


def test_tortoise_values():
    assert rstar_of_r(4.0, 1.0) == pytest.approx(4.0 + 2.0 * math.log(2.0), abs=1e-12)
    assert rstar_of_r(4.0, 1.0) == pytest.approx(5.386294, abs=1e-6)
    assert rstar_of_r(3.0, 0.0) == 3.0


def test_tortoise_rejects_horizon():
    with pytest.raises(ValueError):
        rstar_of_r(2.0, 1.0)


@given(st.floats(min_value=2.0 + 1e-6, max_value=1e6), st.sampled_from([0.5, 1.0, 2.0]))
@settings(max_examples=200, deadline=None)
def test_tortoise_round_trip(r, m):
    r = max(r, 2.0 * m + 1e-6)
    assert r_of_rstar(rstar_of_r(r, m), m) == pytest.approx(r, rel=1e-12)


@given(st.floats(min_value=-50.0, max_value=1e5))
@settings(max_examples=100, deadline=None)
def test_inverse_tortoise_against_bisection(rs):
    m = 1.0
    ref = brentq(lambda r: rstar_of_r(r, m) - rs, 2.0 + 1e-12, 1e7, xtol=1e-14, rtol=1e-15)
    assert r_of_rstar(rs, m) == pytest.approx(ref, rel=1e-11)


def test_metric_values():
    p = ChartParams(m=1.0, R_max=0.1)
    guu, guR, _ = metric_components(np.array([0.05, 0.0]), p)
    assert guu[0] == pytest.approx(0.00225, abs=1e-15)
    assert guu[1] == 0.0
    assert np.all(guR == -1.0)


def test_morawetz_norm_values():
    p = ChartParams(m=1.0, R_max=0.1)
    assert morawetz_norm_sq(-10.0, 0.0, p) == pytest.approx(400.0)
    assert morawetz_norm_sq(-10.0, 0.05, p) == pytest.approx(222.5)


def test_morawetz_null_roots_against_quadratic():
    m, R = 1.0, 0.05
    near, far = morawetz_null_roots(R, m)
    # 4(1+x) + x^2 (1 - 2mR) = 0
    a = 1.0 - 2 * m * R
    roots = sorted(np.roots([a, 4.0, 4.0]).real)
    assert near == pytest.approx(-1.51949, abs=1e-5)
    assert far == pytest.approx(-2.92495, abs=1e-5)
    assert sorted([near, far]) == pytest.approx(roots, rel=1e-12)


def test_curvature_term():
    assert curvature_term(0.1, ChartParams(m=1.0, R_max=0.1)) == pytest.approx(0.2)
    assert curvature_term(0.3, ChartParams(m=0.0, R_max=0.4)) == 0.0
    assert curvature_term(0.0, ChartParams(m=1.0, R_max=0.1)) == 0.0


def test_tau_values():
    assert tau_of_s(1.0) == 0.0
    assert tau_of_s(0.0) == 2.0
    assert tau_of_s(0.25) == pytest.approx(1.0)


@given(st.floats(min_value=0.0, max_value=1.0))
def test_tau_inverse(s):
    assert s_of_tau(tau_of_s(s)) == pytest.approx(s, abs=1e-14)


def test_identifying_field_moves_tau_at_unit_rate():
    p = ChartParams(m=1.0, R_max=0.0125, u0=-100.0)
    rng = np.random.default_rng(0)
    for _ in range(20):
        u = rng.uniform(-160, -100)
        # keep the sample inside t >= 0, i.e. |u| <= r*
        R = rng.uniform(0.001, 1.0 / r_of_rstar(abs(u), 1.0))
        h = 1e-7 * R
        V = identifying_field(u, R, p)
        tau = lambda RR: tau_of_s(s_of_point(u, RR, 1.0))  # noqa: E731
        dtau_dR = (tau(R + h) - tau(R - h)) / (2 * h)
        assert dtau_dR * V == pytest.approx(1.0, rel=1e-6)
    assert identifying_field(-120.0, 0.0, p) == 0.0
    flat = ChartParams(m=0.0, R_max=1.0)
    assert abs(identifying_field(-1.0, 1.0, flat)) == pytest.approx(1.0)


def test_leaves():
    assert sigma0_R(-50.0, 0.0) == pytest.approx(1.0 / 50.0)
    assert leaf_R(-50.0, 0.5, 0.0) == pytest.approx(1.0 / 100.0)
    assert leaf_R(-50.0, 0.0, 1.0) == 0.0
    R = sigma0_R(-60.0, 1.0)
    assert s_of_point(-60.0, R, 1.0) == pytest.approx(1.0, rel=1e-12)


def test_chart_audit_passes_on_far_region():
    audit = chart_audit(ChartParams(m=1.0, u_min=-170.0, u_max=-70.0, R_max=0.01, eps=0.1, u0=-100.0))
    assert audit.passed, audit.violations


def test_chart_audit_u0_minus_50_fails_on_tortoise_ratio():
    # r*/r reaches 1 + 2 log(48)/50 = 1.155 at r = 50
    audit = chart_audit(ChartParams(m=1.0, u_min=-100.0, u_max=-50.0, R_max=1.0 / 50.0, eps=0.1, u0=-50.0))
    assert not audit.passed
    names = {v["inequality"] for v in audit.violations}
    assert "r <= r* < (1+eps) r" in names
    assert audit.ranges["r <= r* < (1+eps) r"][1] == pytest.approx(1.0 + 2.0 * math.log(48.0) / 50.0, rel=1e-3)


def test_chart_audit_reports_witness_for_small_u0():
    audit = chart_audit(ChartParams(m=1.0, u_min=-10.0, u_max=-3.0, R_max=0.3, eps=0.01, u0=-3.0))
    assert not audit.passed
    assert audit.violations and audit.violations[0]["witness"] is not None


@given(st.floats(min_value=0.01, max_value=0.99))
@settings(max_examples=20, deadline=None)
def test_chart_audit_flat_ratios_pass_for_any_eps(eps):
    audit = chart_audit(ChartParams(m=0.0, u_min=-100.0, u_max=-50.0, R_max=0.02, eps=eps, u0=-50.0), 40, 40)
    ratio_failures = [v for v in audit.violations if not v["inequality"].startswith("Morawetz")]
    assert not ratio_failures
    assert audit.ranges["1 <= R r* < 1+eps"] == pytest.approx([1.0, 1.0])
    # on t = 0 the flat Morawetz norm is u^2, so the floor 4 u0^2 eps holds iff eps <= 1/4
    assert audit.passed == (eps <= 0.25)


def test_params_validation():
    with pytest.raises(ValueError):
        ChartParams(m=1.0, R_max=0.5)
    with pytest.raises(ValueError):
        ChartParams(eps=1.0)
    with pytest.raises(ValueError):
        ChartParams(u0=1.0)
