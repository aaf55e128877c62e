"""Independent symbolic derivations that the numerical formulas are frozen against."""

import numpy as np
import pytest
import sympy as sp

from scri_scatter import energy as en
from scri_scatter.chart import ChartParams, inverse_metric_components, morawetz_norm_sq
from scri_scatter.nullgrid import fixed_point_analysis, reduced_equation_rhs

u, R, th, ph, m = sp.symbols("u R theta phi_ m", real=True)
X = [u, R, th, ph]
A = R ** 2 * (1 - 2 * m * R)
G = sp.Matrix([[A, -1, 0, 0], [-1, 0, 0, 0], [0, 0, -1, 0], [0, 0, 0, -sp.sin(th) ** 2]])
GI = G.inv()
SQ = sp.sin(th)
T = [u ** 2, -2 * (1 + u * R), 0, 0]


def _box(f):
    return sum(sp.diff(SQ * sum(GI[a, c] * sp.diff(f, X[c]) for c in range(4)), X[a]) for a in range(4)) / SQ


def test_inverse_metric_block():
    assert sp.simplify(GI[0, 0]) == 0
    assert sp.simplify(GI[0, 1] + 1) == 0
    assert sp.simplify(GI[1, 1] + A) == 0
    num = inverse_metric_components(np.array([0.0, 0.05, 0.1]), ChartParams(m=1.0, R_max=0.1))
    for Rv, guu, guR, gRR in zip([0.0, 0.05, 0.1], *num):
        assert guu == 0.0 and guR == -1.0
        assert gRR == pytest.approx(float(-A.subs({R: Rv, m: 1})), abs=1e-15)


def test_determinant_of_null_block():
    assert sp.simplify(G[:2, :2].det()) == -1


def test_mode_equation_matches_reduction():
    # psi(u, R) Y_lm with the spherical Laplacian eigenvalue -l(l+1)
    psi = sp.Function("psi")(u, R)
    box = sp.expand(
        sum(sp.diff(sum(GI[a, c] * sp.diff(psi, X[c]) for c in range(2)), X[a]) for a in range(2))
    )
    # angular part contributes + l(l+1) psi for the -d omega^2 sign
    lhs = -box
    rhs = sp.diff(2 * sp.diff(psi, u) + A * sp.diff(psi, R), R)
    assert sp.simplify(lhs - rhs) == 0
    # 2 psi_uR = G with G = -d_R(A psi_R) + (L + 2mR) psi + b psi^3
    p0, p1, p2, bs = sp.symbols("p0 p1 p2 bs", real=True)
    G_sym = -(sp.diff(A, R) * p1 + A * p2) + (2 + 2 * m * R) * p0 + bs * p0 ** 3
    rng = np.random.default_rng(0)
    for _ in range(5):
        vals = {R: rng.uniform(0, 0.1), m: 1.0, p0: rng.normal(), p1: rng.normal(), p2: rng.normal(), bs: 0.3}
        got = reduced_equation_rhs(vals[p0], vals[p1], vals[p2], vals[R], 1, 1.0, 0.3)
        assert float(got) == pytest.approx(float(G_sym.subs(vals)), rel=1e-12, abs=1e-15)

def test_flat_massless_mode_equation_is_dalembert():
    f = sp.Function("f")(u)
    g = sp.Function("g")(R)
    psi = f + g
    expr = sp.diff(2 * sp.diff(psi, u) + R ** 2 * sp.diff(psi, R), R)
    # with m = 0 and l = 0, psi = f(u) + g(R) needs R^2 g' constant; g = 0 is the outgoing case
    assert sp.simplify(expr.subs(g, 0).doit()) == 0


def test_morawetz_norm_closed_form():
    norm = sum(G[a, c] * T[a] * T[c] for a in range(2) for c in range(2))
    target = u ** 2 * (4 * (1 + u * R) + u ** 2 * A)
    assert sp.simplify(norm - target) == 0
    p = ChartParams(m=1.0, R_max=0.1)
    assert morawetz_norm_sq(-10.0, 0.05, p) == pytest.approx(float(target.subs({u: -10, R: sp.Rational(1, 20), m: 1})))


def test_killing_form_coefficient_and_trace():
    Tv = sp.Matrix(T)
    L = sp.Matrix(4, 4, lambda a, c: sum(Tv[k] * sp.diff(G[a, c], X[k]) for k in range(4))
                  + sum(G[k, c] * sp.diff(Tv[k], X[a]) for k in range(4))
                  + sum(G[a, k] * sp.diff(Tv[k], X[c]) for k in range(4)))
    L = sp.simplify(L)
    for a in range(4):
        for c in range(4):
            if (a, c) != (0, 0):
                assert L[a, c] == 0
    Kuu = sp.simplify(L[0, 0])
    assert sp.simplify(Kuu - 4 * m * R ** 2 * (3 + u * R)) == 0
    assert sp.simplify(sum(GI[a, c] * L[a, c] for a in range(4) for c in range(4))) == 0
    assert en.killing_form_coefficient(-5.0, 0.1, 1.0) == pytest.approx(float(Kuu.subs({u: -5, R: sp.Rational(1, 10), m: 1})))


@pytest.fixture(scope="module")
def current_and_divergence():
    f = sp.Function("f")(u, R, th, ph)
    bb = sp.Function("b")(u, R)
    grad = [sp.diff(f, x) for x in X]
    n2 = sum(GI[a, c] * grad[a] * grad[c] for a in range(4) for c in range(4))
    Lag = -sp.Rational(1, 2) * n2 + f ** 2 / 2 + bb * f ** 4 / 4
    Tab = sp.Matrix(4, 4, lambda a, c: grad[a] * grad[c] + G[a, c] * Lag)
    J = [sum(GI[b_, c] * T[a] * Tab[a, c] for a in range(4) for c in range(4)) for b_ in range(4)]
    div = sum(sp.diff(SQ * J[b_], X[b_]) for b_ in range(4)) / SQ
    fuR = sp.solve(sp.Eq(_box(f), -2 * m * R * f - bb * f ** 3), sp.Derivative(f, u, R))[0]
    divs = sp.simplify(sp.expand(div.subs(sp.Derivative(f, u, R), fuR).doit()))
    return f, bb, grad, J, divs


def test_divergence_identity_derived_form(current_and_divergence):
    f, bb, grad, _, divs = current_and_divergence
    Tf = T[0] * grad[0] + T[1] * grad[1]
    Tb = T[0] * sp.diff(bb, u) + T[1] * sp.diff(bb, R)
    derived = 2 * m * R ** 2 * (3 + u * R) * grad[1] ** 2 + (1 - 2 * m * R) * f * Tf + Tb * f ** 4 / 4
    assert sp.simplify(sp.expand(divs - derived)) == 0
    full_lie = 4 * m * R ** 2 * (3 + u * R) * grad[1] ** 2 + (1 - 12 * m * R) * f * Tf + Tb * f ** 4 / 4
    assert sp.simplify(sp.expand(divs - full_lie)) != 0


def test_error_integrand_matches_symbolic(current_and_divergence):
    f, bb, grad, _, divs = current_and_divergence
    rng = np.random.default_rng(3)
    for _ in range(5):
        vals = {u: rng.uniform(-50, -5), R: rng.uniform(0, 0.05), m: 1.0}
        jet = rng.normal(size=3)
        Tf = float((T[0] * jet[1] + T[1] * jet[2]).subs(vals))
        expect = (2 * vals[m] * vals[R] ** 2 * (3 + vals[u] * vals[R]) * jet[2] ** 2
                  + (1 - 2 * vals[m] * vals[R]) * jet[0] * Tf + 0.7 * jet[0] ** 4 / 4)
        got = en.error_integrand(jet[0], jet[1], jet[2], vals[u], vals[R], vals[m], Tb=0.7)
        assert got == pytest.approx(expect, rel=1e-12)


def test_currents_match_symbolic(current_and_divergence):
    f, bb, grad, J, _ = current_and_divergence
    l = 2
    # angular derivatives of a Y_lm mode average to l(l+1) phi^2 over the sphere
    pu, pR, p, bs = sp.symbols("pu pR p bs", real=True)
    rep = {grad[0]: pu, grad[1]: pR, sp.diff(f, th): 0, sp.diff(f, ph): 0, f: p, bb: bs}
    Ju = sp.expand(J[0].subs(rep))
    JR = sp.expand(J[1].subs(rep))
    # the angular gradient enters with |grad_S phi|^2 -> L phi^2 after averaging
    Lval = l * (l + 1)
    Ju_mode = Ju + u ** 2 * Lval * p ** 2 / 2
    mJR_mode = -JR + 2 * (1 + u * R) * Lval * p ** 2 / 2
    rng = np.random.default_rng(5)
    for _ in range(5):
        vals = {u: rng.uniform(-40, -5), R: rng.uniform(0, 0.05), m: 1.0, pu: rng.normal(), pR: rng.normal(),
                p: rng.normal(), bs: rng.uniform(0, 2)}
        args = (vals[p], vals[pu], vals[pR], vals[u], vals[R], vals[m], vals[bs], l)
        assert en.current_u(*args) == pytest.approx(float(Ju_mode.subs(vals)), rel=1e-12)
        assert en.current_minus_R(*args) == pytest.approx(float(mJR_mode.subs(vals)), rel=1e-12)


def test_leaf_density_is_flux_through_leaf():
    # H_s: |u| = s r*, so along the leaf dR/du = A/s and the flux is (A/s) J^u - J^R
    rng = np.random.default_rng(11)
    for _ in range(5):
        uv, Rv, s = rng.uniform(-40, -5), rng.uniform(0, 0.02), rng.uniform(0.1, 1)
        jet = rng.normal(size=3)
        Av = Rv * Rv * (1 - 2 * Rv)
        expect = (Av / s) * en.current_u(jet[0], jet[1], jet[2], uv, Rv, 1.0) + en.current_minus_R(
            jet[0], jet[1], jet[2], uv, Rv, 1.0)
        assert en.integrand_Hs(jet[0], jet[1], jet[2], uv, Rv, s, 1.0) == pytest.approx(expect, rel=1e-13)


def test_cardano_against_sympy_roots():
    x = sp.Symbol("x")
    for alpha, beta in [(1, sp.Rational(3, 10)), (4, 0), (2, sp.Rational(1, 10))]:
        roots = sorted(float(r) for r in sp.Poly(x ** 3 - x / alpha + beta, x).nroots(n=30))
        fp = fixed_point_analysis(float(alpha), float(beta))
        got = sorted([fp.lambda0, fp.lambda1, fp.lambda2])
        assert np.allclose(got, roots, atol=1e-14)
