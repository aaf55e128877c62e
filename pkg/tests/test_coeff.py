import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scri_scatter.chart import ChartParams
from scri_scatter.coeff import (
    UNBOUNDED,
    b_from_config,
    conformal_to_physical_data,
    constant_b,
    cutoff_b,
    physical_to_conformal_data,
    power_b,
    smooth_step,
    smooth_step_derivative,
    validate_b,
    zero_b,
)

DESK = ChartParams(m=1.0, u_min=-170.0, u_max=-70.0, R_max=0.0125, u0=-100.0)


def test_zero_b_constants_vanish():
    rep = validate_b(zero_b(), DESK)
    assert rep.all_finite
    assert rep.to_dict()["a3_best_constant"] == 0.0


def test_power_one_flags_a3():
    rep = validate_b(power_b(1.0, 1.0), DESK, nu=33, nR=33)
    assert rep.sup_positivity_violation == 0.0
    assert rep.scri_limit_residual == 0.0
    assert rep.a3_best_constant == UNBOUNDED
    # T(R) = -2(1 + uR), so the ratio grows like 2|1 + uR| / R towards null infinity
    a3 = rep.history["a3"]
    assert a3[-1] > 100 * a3[0]


def test_cutoff_b_finite_except_a3():
    rep = validate_b(cutoff_b(1.0, 0.004, 0.008), DESK)
    assert rep.sup_positivity_violation == 0.0
    assert rep.scri_limit_residual == 0.0
    assert isinstance(rep.a4_best_constant, float)
    assert rep.a3_best_constant == UNBOUNDED


def test_constant_b_fails_scri_limit():
    rep = validate_b(constant_b(2.0), DESK, nu=17, nR=17)
    assert rep.scri_limit_residual == pytest.approx(2.0)


def test_static_flags():
    for b in (zero_b(), constant_b(1.0), power_b(1.0, 3.0), cutoff_b(1.0, 0.01, 0.02)):
        assert b.static
    assert b_from_config("cutoff", R1="0.01", R2="0.02")(0.0, 0.03) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        b_from_config("nope")


def test_smooth_step_shape():
    x = np.linspace(-1, 2, 3001)
    y = smooth_step(x)
    assert np.all(np.diff(y) >= 0)
    assert y[0] == 0.0 and y[-1] == 1.0
    assert smooth_step(0.5) == pytest.approx(0.5)


def test_smooth_step_derivative_against_differences():
    x = np.linspace(0.01, 0.99, 99)
    h = 1e-6
    fd = (smooth_step(x + h) - smooth_step(x - h)) / (2 * h)
    assert np.allclose(smooth_step_derivative(x), fd, rtol=1e-6, atol=1e-9)
    assert smooth_step_derivative(0.5) == pytest.approx(2.0)


def test_conformal_data_trivial_cases():
    z = np.zeros(4)
    assert all(np.all(a == 0) for a in physical_to_conformal_data(z, z, np.ones(4), z))
    th = np.arange(4.0)
    xi = np.arange(4.0) ** 2
    p0, p1 = physical_to_conformal_data(th, xi, np.ones(4), z)
    assert np.array_equal(p0, th) and np.array_equal(p1, xi)


finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)


@given(arrays(float, 8, elements=finite), arrays(float, 8, elements=finite),
       arrays(float, 8, elements=st.floats(min_value=0.1, max_value=10.0)),
       arrays(float, 8, elements=st.floats(min_value=-5.0, max_value=5.0)))
def test_conformal_data_round_trip(th, xi, om, dom):
    p0, p1 = physical_to_conformal_data(th, xi, om, dom)
    th2, xi2 = conformal_to_physical_data(p0, p1, om, dom)
    scale = 1.0 + np.abs(th) + np.abs(xi) + np.abs(dom * th / om)
    assert np.all(np.abs(th2 - th) <= 1e-12 * scale)
    assert np.all(np.abs(xi2 - xi) <= 1e-12 * scale)
