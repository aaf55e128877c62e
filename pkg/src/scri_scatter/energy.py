"""
Energy densities of the Morawetz current and the Stokes audit on the region near spatial infinity.

For one mode (angular profile normalised to ``int Y^2 dω = 4π``) the sphere
integral of any density below equals ``4π`` times the value returned here,
with ``|∇_S phi|^2`` replaced by ``l(l+1) phi^2``.  The quartic term assumes
``l = 0``.

Notation: ``A = R^2 (1 - 2mR)``, ``L = l(l+1)`` and

    Q = L phi^2 / 2 + phi^2 / 2 + b phi^4 / 4 .

The current ``J^b = g^{bc} T^a T_{ac}`` has components

    J^u  = (2(1 + uR) + u^2 A / 2) phi_R^2 + u^2 Q
    -J^R = u^2 phi_u^2 + A (u^2 phi_u phi_R - (1 + uR) phi_R^2) + 2 (1 + uR) Q .
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import RectBivariateSpline

from .chart import (
    ChartParams,
    identifying_field,
    leaf_R,
    morawetz_vector,
    s_of_tau,
    sigma0_R,
)
from .coeff import CoeffB, zero_b
from .errors import FoliationOutsideDomain
from .nullgrid import ModeField, ScriProfile

FOUR_PI = 4.0 * math.pi


def _Q(phi, l, b):
    L = l * (l + 1)
    return 0.5 * L * phi ** 2 + 0.5 * phi ** 2 + 0.25 * b * phi ** 4


def current_u(phi, phi_u, phi_R, u, R, m, b=0.0, l=0):
    """``J^u``."""
    A = R * R * (1.0 - 2.0 * m * R)
    return (2.0 * (1.0 + u * R) + 0.5 * u * u * A) * phi_R ** 2 + u * u * _Q(phi, l, b)


def current_minus_R(phi, phi_u, phi_R, u, R, m, b=0.0, l=0):
    """``-J^R``."""
    A = R * R * (1.0 - 2.0 * m * R)
    return (
        u * u * phi_u ** 2
        + A * (u * u * phi_u * phi_R - (1.0 + u * R) * phi_R ** 2)
        + 2.0 * (1.0 + u * R) * _Q(phi, l, b)
    )


def integrand_Su(phi, phi_u, phi_R, u, R, m, b=0.0, l=0):
    """Density on an outgoing cone ``u = const`` with respect to ``dR dω``."""
    return current_u(phi, phi_u, phi_R, u, R, m, b, l)


def integrand_scri(phi, phi_u, u, b=0.0, l=0):
    """Density on null infinity with respect to ``du dω``."""
    L = l * (l + 1)
    return u * u * phi_u ** 2 + L * phi ** 2 + phi ** 2 + 0.5 * b * phi ** 4


def integrand_Hs(phi, phi_u, phi_R, u, R, s, m, b=0.0, l=0):
    """
    Density on the leaf ``H_s = {|u| = s r*}`` with respect to ``du dω``.

    Along the leaf ``dR/du = A/s``, so the flux is ``(A/s) J^u - J^R``.
    """
    A = R * R * (1.0 - 2.0 * m * R)
    return (A / s) * current_u(phi, phi_u, phi_R, u, R, m, b, l) + current_minus_R(phi, phi_u, phi_R, u, R, m, b, l)


def integrand_slice(e0_phi, e_phi, phi, beta, delta, b=0.0, l=0):
    """
    Flux density ``T(T, e_0)`` through a spacelike slice in an orthonormal frame.

    Parameters
    ----------
    e0_phi : array
        Derivative along the unit normal.
    e_phi : array, last axis = tangential directions
        Derivatives along the tangential frame vectors that carry a
        component of the Morawetz field (the angular ones are folded into
        ``l``).
    beta : array
        Normal component of the Morawetz field.
    delta : array, same shape as ``e_phi``
        Tangential components of the Morawetz field.
    """
    e_phi = np.asarray(e_phi, dtype=float)
    delta = np.asarray(delta, dtype=float)
    L = l * (l + 1)
    tang = np.sum(e_phi ** 2, axis=-1) + L * np.asarray(phi) ** 2
    pot = 0.5 * phi ** 2 + 0.25 * b * phi ** 4
    return beta * (0.5 * e0_phi ** 2 + 0.5 * tang + pot) + e0_phi * np.sum(delta * e_phi, axis=-1)


def static_slice_frame(u, R, m):
    """
    Frame data of ``t = const`` in the rescaled metric.

    Returns
    -------
    (n_u, t_u, t_R, beta, delta, jac)
        The unit normal is ``n_u d_u``; the unit tangent is ``t_u d_u + t_R d_R``;
        ``beta`` and ``delta`` are the Morawetz components; ``jac`` is the
        slice length element per ``du``.
    """
    A = R * R * (1.0 - 2.0 * m * R)
    sq = np.sqrt(A)
    Tu, TR = morawetz_vector(u, R)
    delta = TR / sq
    beta = Tu * sq - delta
    return 1.0 / sq, 1.0 / sq, sq, beta, delta, sq


def reference_density(phi, phi_u, phi_R, u, R, b=0.0, l=0):
    """Positive reference density ``u^2 phi_u^2 + (R/|u|) phi_R^2 + L phi^2 + phi^2/2 + b phi^4/4``."""
    L = l * (l + 1)
    return u * u * phi_u ** 2 + (R / np.abs(u)) * phi_R ** 2 + L * phi ** 2 + 0.5 * phi ** 2 + 0.25 * b * phi ** 4


def killing_form_coefficient(u, R, m):
    """
    ``K_uu`` of the Lie derivative of the metric along the Morawetz field.

    It is the only non-zero component: ``4 m R^2 (3 + uR)``.
    """
    return 4.0 * m * R * R * (3.0 + u * R)


def killing_form_trace(u, R, m):
    """``g^{ab} K_ab = g^{uu} K_uu``, identically zero."""
    return 0.0 * killing_form_coefficient(u, R, m)


def error_integrand(phi, phi_u, phi_R, u, R, m, Tb=0.0, full_lie: bool = False):
    """
    Divergence of the Morawetz current on solutions.

    The default is the expression obtained by direct differentiation:
    ``2 m R^2 (3 + uR) phi_R^2 + (1 - 2mR) phi T(phi) + T(b) phi^4 / 4``.
    ``full_lie=True`` gives the variant with the full Lie derivative
    ``4 m R^2 (3 + uR)`` and the factor ``1 - 12 m R``; it does not balance the
    Stokes identity and exists for comparison only.
    """
    Tu, TR = morawetz_vector(u, R)
    Tphi = Tu * phi_u + TR * phi_R
    if full_lie:
        return killing_form_coefficient(u, R, m) * phi_R ** 2 + (1.0 - 12.0 * m * R) * phi * Tphi + 0.25 * Tb * phi ** 4
    return 0.5 * killing_form_coefficient(u, R, m) * phi_R ** 2 + (1.0 - 2.0 * m * R) * phi * Tphi + 0.25 * Tb * phi ** 4


def morawetz_derivative_of_b(b: CoeffB, u, R):
    """``T(b)`` by centred differences of the sampler."""
    if b.is_zero:
        return np.zeros(np.broadcast(u, R).shape)
    u = np.asarray(u, dtype=float)
    R = np.asarray(R, dtype=float)
    du = 1e-5 * (1.0 + np.abs(u))
    dR = 1e-5 * np.maximum(R, 1e-8)
    Tu, TR = morawetz_vector(u, R)
    bu = (b(u + du, R) - b(u - du, R)) / (2 * du)
    bR = (b(u, R + dR) - b(u, np.maximum(R - dR, 0.0))) / (R + dR - np.maximum(R - dR, 0.0))
    return Tu * bu + TR * bR


# ---------------------------------------------------------------------------
# Equivalence constants and the scri norm
# ---------------------------------------------------------------------------

@dataclass
class EquivalenceConstants:
    """Upper constant and the known part of the lower constant."""

    C_eps: float
    c_eps_known_parts: float
    upper_terms: tuple
    lower_terms: tuple
    polynomial_branch_included: bool


def equivalence_constants(eps: float, P_value: Optional[float] = None) -> EquivalenceConstants:
    """
    Constants of the equivalence between the leaf energy and the reference energy.

    Parameters
    ----------
    eps : float
        In (0, 1).
    P_value : float, optional
        A bound for the unspecified polynomial ``P(eps)``.  Without it the
        branch ``1/6 - eps P(eps)`` is omitted and flagged.

    Returns
    -------
    EquivalenceConstants
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    upper = (
        1.0,
        (1.0 + eps) ** 3 / 3.0,
        (1.0 + eps) * ((3.0 + eps ** 2) ** 2 / 2.0 + (1.0 + eps)),
        (1.0 - eps) * (1.0 + eps) + 2.0,
    )
    lower = [0.25, 1.0 - 2.0 * eps - eps ** 2]
    if P_value is not None:
        lower.insert(1, 1.0 / 6.0 - eps * P_value)
    return EquivalenceConstants(max(upper), min(lower), upper, tuple(lower), P_value is not None)


def h1_scri_norm(theta: ScriProfile) -> float:
    """
    Weighted H^1 norm on null infinity.

    ``norm^2 = 4π * 2 ∫ (u^2 theta'^2 / 4 + l(l+1) theta^2 + theta^2) du``
    with second-order differences and the trapezoid rule.
    """
    u, th = theta.u, theta.theta
    if u.size < 3:
        return 0.0
    d = np.gradient(th, u, edge_order=2)
    L = theta.l * (theta.l + 1)
    dens = 0.25 * u * u * d * d + L * th * th + th * th
    return float(math.sqrt(max(0.0, 2.0 * FOUR_PI * np.trapezoid(dens, u))))


# ---------------------------------------------------------------------------
# Stokes audit
# ---------------------------------------------------------------------------

@dataclass
class EnergyReport:
    """Energies of one solved mode on the region ``{u <= u0, t >= 0}``."""

    E_sigma0_far: float
    E_Su0: float
    E_scri_u0: float
    E_Su_edge: float
    E_Hs: list
    stokes_residual: float
    error_integral: float
    c_lower: float
    C_upper: float
    gronwall_constant: float
    envelope_ok: bool = True
    envelope_witness: Optional[dict] = None
    leaves: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def leaves_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "tau", "E_Hs", "error_so_far"])
        for row in self.leaves:
            w.writerow([f"{row['s']:.17g}", f"{row['tau']:.17g}", f"{row['E_Hs']:.17g}", f"{row['error_so_far']:.17g}"])
        return buf.getvalue()


class FieldJets:
    """Bicubic interpolant of a retarded-chart field with first derivatives."""

    def __init__(self, fld: ModeField):
        if fld.chart != "retarded":
            raise ValueError("energy audit expects a retarded-chart field")
        self.spl = RectBivariateSpline(fld.x, fld.R, fld.values, kx=3, ky=3, s=0)

    def __call__(self, u, R):
        u = np.asarray(u, dtype=float)
        R = np.asarray(R, dtype=float)
        phi = self.spl.ev(u, R)
        phi_u = self.spl.ev(u, R, dx=1)
        phi_R = self.spl.ev(u, R, dy=1)
        return phi, phi_u, phi_R


def _u_nodes(x, u_hi):
    inner = x[x < u_hi - 1e-12 * (1 + abs(u_hi))]
    return np.append(inner, u_hi)


def stokes_audit(fld: ModeField, b: Optional[CoeffB], params: ChartParams, n_leaves: int = 32,
                 eps: Optional[float] = None, P_value: Optional[float] = None, envelope_tol: float = 0.0,
                 full_lie_error: bool = False) -> EnergyReport:
    """
    Energy balance on ``{u_first <= u <= u0, t >= 0}``.

    The region is bounded by null infinity, the cone ``S_{u0}``, the slice
    ``t = 0`` and the first lattice cone ``S_{u_first}``.  Green's theorem in
    the (u, R) plane gives

        E(scri) + E(S_u0) - E(Sigma_0) - E(S_first) = ∫∫ div J du dR,

    with the bulk integral evaluated leaf by leaf along the tau-foliation
    using ``|dR/dtau|``.  The residual is normalised by ``E(Sigma_0)``.

    Parameters
    ----------
    fld : ModeField
    b : CoeffB or None
    params : ChartParams
        ``u0`` cuts the region; ``eps`` defaults to ``params.eps``.
    n_leaves : int
        Number of tau intervals (even; Simpson's rule in tau).
    envelope_tol : float
        Relative slack when comparing leaf ratios with the constants.

    Raises
    ------
    FoliationOutsideDomain
        If ``u0`` is outside the lattice or ``t = 0`` leaves the lattice.
    ValueError
        If ``eps`` gives a non-positive lower equivalence constant.
    """
    b = zero_b() if b is None else b
    m, u0 = params.m, params.u0
    eps = params.eps if eps is None else eps
    consts = equivalence_constants(eps, P_value)
    if consts.c_eps_known_parts <= 0:
        raise ValueError("eps too large: the lower equivalence constant is not positive")
    if n_leaves % 2:
        n_leaves += 1
    x = fld.x
    if not (x[0] < u0 <= x[-1]):
        raise FoliationOutsideDomain("u0 outside the field lattice", u0=u0, u_lo=float(x[0]), u_hi=float(x[-1]))
    if u0 >= 0:
        raise FoliationOutsideDomain("u0 must be negative")
    R_top = float(sigma0_R(u0, m))
    if R_top > fld.R[-1] * (1 + 1e-12):
        raise FoliationOutsideDomain("t = 0 leaves the lattice before u0", R_needed=R_top, R_max=float(fld.R[-1]))
    jets = FieldJets(fld)
    l = fld.l
    un = _u_nodes(x, u0)
    bsc = (lambda uu, RR: b(uu, RR)) if not b.is_zero else (lambda uu, RR: np.zeros(np.broadcast(uu, RR).shape))

    # null infinity
    phi, phi_u, _ = jets(un, np.zeros_like(un))
    E_scri = FOUR_PI * np.trapezoid(integrand_scri(phi, phi_u, un, bsc(un, 0.0), l), un)

    def cone_energy(uc):
        Rtop = float(sigma0_R(uc, m))
        Rn = np.append(fld.R[fld.R < Rtop - 1e-15], Rtop)
        ph, pu, pR = jets(np.full_like(Rn, uc), Rn)
        return FOUR_PI * np.trapezoid(integrand_Su(ph, pu, pR, uc, Rn, m, bsc(uc, Rn), l), Rn)

    E_Su0 = cone_energy(u0)
    E_edge = cone_energy(float(x[0]))

    def leaf_energy(s):
        Rl = leaf_R(un, s, m) if s > 0 else np.zeros_like(un)
        ph, pu, pR = jets(un, Rl)
        bv = bsc(un, Rl)
        if s == 0:
            form = integrand_scri(ph, pu, un, bv, l)
        else:
            form = integrand_Hs(ph, pu, pR, un, Rl, s, m, bv, l)
        ref = reference_density(ph, pu, pR, un, Rl, bv, l)
        return FOUR_PI * np.trapezoid(form, un), FOUR_PI * np.trapezoid(ref, un), Rl, ph, pu, pR, bv

    taus = np.linspace(0.0, 2.0, n_leaves + 1)
    leaf_E, leaf_ref, bulk_rate = [], [], []
    for tau in taus:
        s = float(s_of_tau(tau))
        E, ref, Rl, ph, pu, pR, bv = leaf_energy(s)
        leaf_E.append(E)
        leaf_ref.append(ref)
        if s == 0:
            bulk_rate.append(0.0)
            continue
        Tb = morawetz_derivative_of_b(b, un, Rl)
        err = error_integrand(ph, pu, pR, un, Rl, m, Tb, full_lie=full_lie_error)
        speed = np.abs(identifying_field(un, Rl, params))
        bulk_rate.append(FOUR_PI * np.trapezoid(err * speed, un))
    bulk_rate = np.asarray(bulk_rate)
    bulk = float(simpson(bulk_rate, x=taus))
    E_sigma = leaf_E[0]
    residual = abs(E_sigma - E_scri - E_Su0 + E_edge + bulk)
    rel = residual / E_sigma if E_sigma > 0 else residual

    ratios = np.array([e / r if r > 0 else np.nan for e, r in zip(leaf_E, leaf_ref)])
    finite = ratios[np.isfinite(ratios)]
    # a zero field has no defined ratio; report zeros
    c_meas = float(finite.min()) if finite.size else 0.0
    C_meas = float(finite.max()) if finite.size else 0.0
    env_ok, witness = True, None
    lo = consts.c_eps_known_parts * (1 - envelope_tol)
    hi = consts.C_eps * (1 + envelope_tol)
    for k, rr in enumerate(ratios):
        if np.isfinite(rr) and not (lo <= rr <= hi):
            env_ok = False
            witness = {"tau": float(taus[k]), "ratio": float(rr), "side": "lower" if rr < lo else "upper"}
            break

    with np.errstate(divide="ignore", invalid="ignore"):
        if E_sigma > 0:
            K = float(np.max(np.log(np.asarray(leaf_E[1:]) / E_sigma) / taus[1:]))
        else:
            K = 0.0

    cum = np.concatenate([[0.0], np.cumsum(0.5 * (bulk_rate[1:] + bulk_rate[:-1]) * np.diff(taus))])
    leaves = [
        {"s": float(s_of_tau(t)), "tau": float(t), "E_Hs": float(e), "error_so_far": float(c)}
        for t, e, c in zip(taus, leaf_E, cum)
    ]
    return EnergyReport(
        E_sigma0_far=float(E_sigma),
        E_Su0=float(E_Su0),
        E_scri_u0=float(E_scri),
        E_Su_edge=float(E_edge),
        E_Hs=[float(e) for e in leaf_E],
        stokes_residual=float(rel),
        error_integral=bulk,
        c_lower=c_meas,
        C_upper=C_meas,
        gronwall_constant=K,
        envelope_ok=env_ok,
        envelope_witness=witness,
        leaves=leaves,
    )
