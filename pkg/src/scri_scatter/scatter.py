"""
Trace operators between the initial slice and null infinity, and the scattering operator.

Data on the slice ``t = 0`` are carried by :class:`SigmaData` on the uniform
r*-lattice of the Cauchy solver.  The past-infinity operators come from the
time reflection ``t -> -t`` of the static exterior:

* :func:`reflect_profile` maps a profile on past null infinity (advanced time
  ``v``) to the future profile of the reflected solution (``u = -v``);
* :func:`mirror` maps slice data of a solution to slice data of its reflection.

Then ``T_-^0 = mirror . T_+^0 . reflect`` and ``T_0^- = reflect . T_0^+ . mirror``,
and the scattering operator is ``S = T_0^+ . T_-^0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .cauchygrid import CauchyState, evolve_cauchy, make_lattice, sample_series, worldtube_series
from .chart import ChartParams, lapse_factor, r_of_rstar
from .coeff import CoeffB, smooth_step, smooth_step_derivative, zero_b
from .energy import h1_scri_norm, integrand_Hs
from .errors import ConeOutsideDomain, ExtractionInconsistency, NoContraction
from .nullgrid import ModeField, ScriProfile, interp_matrix, march_from_worldtube, picard_solve, solve_goursat


@dataclass(frozen=True)
class ScatterConfig:
    """
    Numerical knobs of the trace operators.

    Parameters
    ----------
    rstar_extract : float
        Extraction radius ``r*_E``; the forward march starts on the cone
        ``u_c = -r*_E``.  Slice data must vanish beyond it.
    rstar_extract_alt : float, optional
        Second extraction radius; when set, both traces are computed and
        compared.
    extraction_tol : float
        Relative H^1 tolerance between the two traces.
    dr : float
        Spacing of the Cauchy lattice (and of every SigmaData).
    cfl : float
        ``dt / dr``, at most 1/2.
    NR : int
        R-lattice size of the backward Goursat solves.
    NR_extract : int
        R-lattice size of the forward march between the extraction radius and null infinity.
    edge_margin : float
        Extra r* beyond the light cone of the data before the outer Dirichlet edge.
    contraction_gate : float
        Largest admissible Picard contraction ratio for nonlinear solves.
    taper_width : float
        Width in r* of the smooth cutoff applied to slice data read from a
        backward solve, ending at the outer end of the slice lattice.  Zero
        keeps the raw truncation.
    """

    rstar_extract: float = 80.0
    rstar_extract_alt: Optional[float] = None
    extraction_tol: float = 1e-3
    dr: float = 0.05
    cfl: float = 0.5
    NR: int = 1025
    NR_extract: int = 129
    edge_margin: float = 40.0
    contraction_gate: float = 0.9
    picard_max_iter: int = 60
    taper_width: float = 10.0


@dataclass
class SigmaData:
    """
    One mode on the slice ``t = 0``: field, Morawetz derivative and r*-derivative.

    ``rstar[0]`` is the worldtube.  ``xi`` is the derivative along the future
    Morawetz field ``T = (u^2 + c) d_t + c d_{r*}`` with ``u = -r*`` and
    ``c = 2(1 + uR)/(R^2 F)``.  ``dpsi`` is the tangential derivative
    ``d_{r*} psi``; it is carried so that :func:`mirror` is exact.
    ``chart`` names the null chart the samples were read from.
    """

    rstar: np.ndarray
    psi: np.ndarray
    xi: np.ndarray
    dpsi: np.ndarray
    l: int = 0
    m: float = 0.0
    chart: str = "retarded"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rstar = np.asarray(self.rstar, dtype=float)
        self.psi = np.asarray(self.psi, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        self.dpsi = np.asarray(self.dpsi, dtype=float)
        n = self.rstar.size
        if not (self.psi.shape == self.xi.shape == self.dpsi.shape == (n,)):
            raise ValueError("SigmaData arrays must share the lattice shape")

    @property
    def dr(self) -> float:
        return float(self.rstar[1] - self.rstar[0])

    @property
    def R(self) -> np.ndarray:
        return 1.0 / np.asarray(r_of_rstar(self.rstar, self.m))

    @property
    def c(self) -> np.ndarray:
        R = self.R
        return 2.0 * (1.0 - self.rstar * R) / lapse_factor(R, self.m)

    @property
    def psi_t(self) -> np.ndarray:
        """Time derivative recovered from ``xi`` and ``dpsi``."""
        c = self.c
        return (self.xi - c * self.dpsi) / (self.rstar ** 2 + c)

    @property
    def edge_amplitude(self) -> float:
        """Largest ``|psi|`` or ``|xi| / u^2`` on the last five samples (support margin diagnostic)."""
        tail = slice(-5, None)
        return float(max(np.max(np.abs(self.psi[tail])), np.max(np.abs(self.xi[tail]) / self.rstar[tail] ** 2)))

    @classmethod
    def from_cauchy(cls, rstar, psi, psi_t, l: int, m: float, chart: str = "retarded") -> "SigmaData":
        """Build from ``(psi, psi_t)``; ``d_{r*} psi`` by fourth-order differences."""
        rstar = np.asarray(rstar, dtype=float)
        psi = np.asarray(psi, dtype=float)
        dr = rstar[1] - rstar[0]
        d = np.gradient(psi, dr, edge_order=2)
        if psi.size >= 5:
            d[2:-2] = (psi[:-4] - 8.0 * psi[1:-3] + 8.0 * psi[3:-1] - psi[4:]) / (12.0 * dr)
        out = cls(rstar, psi, np.zeros_like(psi), d, l, m, chart)
        c = out.c
        out.xi = (rstar ** 2 + c) * np.asarray(psi_t, dtype=float) + c * d
        return out

    def zeros_like(self) -> "SigmaData":
        z = np.zeros_like(self.psi)
        return SigmaData(self.rstar.copy(), z, z.copy(), z.copy(), self.l, self.m, self.chart)


def mirror(data: SigmaData) -> SigmaData:
    """
    Slice data of the time-reflected solution.

    ``psi`` and ``dpsi`` are even under ``t -> -t`` and ``psi_t`` is odd, so
    ``xi' = -xi + 2 c dpsi``.  The chart tag is swapped.  Involution.
    """
    flipped = {"retarded": "advanced", "advanced": "retarded"}[data.chart]
    xi = -data.xi + 2.0 * data.c * data.dpsi
    return SigmaData(data.rstar.copy(), data.psi.copy(), xi, data.dpsi.copy(), data.l, data.m, flipped, dict(data.meta))


def reflect_profile(theta: ScriProfile) -> ScriProfile:
    """Profile of the time-reflected solution on the opposite null infinity (``u = -v``)."""
    side = {"plus": "minus", "minus": "plus"}[theta.side]
    support = None if theta.support is None else (-theta.support[1], -theta.support[0])
    return ScriProfile(-theta.u[::-1], theta.theta[::-1].copy(), theta.l, support, side)


# ---------------------------------------------------------------------------
# Null infinity -> slice
# ---------------------------------------------------------------------------

def _sigma_lattice(x: np.ndarray, chart: str, params: ChartParams, dr: float) -> np.ndarray:
    # the slice is u = -r* (retarded) or v = r* (advanced); keep the covered part
    top = -x[0] if chart == "retarded" else x[-1]
    return make_lattice(params.rstar_wall, top, dr)


def read_sigma(fld: ModeField, params: ChartParams, dr: float) -> SigmaData:
    """
    Sample a solved field on the slice ``t = 0`` by bicubic interpolation.

    Parameters
    ----------
    fld : ModeField
        Retarded or advanced chart.
    params : ChartParams
    dr : float
        Spacing of the output lattice, which starts at the worldtube.
    """
    rs = _sigma_lattice(fld.x, fld.chart, params, dr)
    if rs.size < 8:
        raise ConeOutsideDomain("the slice t = 0 barely meets the solved lattice", points=int(rs.size))
    R = 1.0 / np.asarray(r_of_rstar(rs, params.m))
    R = np.minimum(R, fld.R[-1])
    spl = RectBivariateSpline(fld.x, fld.R, fld.values, kx=3, ky=3, s=0)
    if fld.chart == "retarded":
        xs, sign = -rs, -1.0
    else:
        xs, sign = rs, 1.0
    psi = spl.ev(xs, R)
    px = spl.ev(xs, R, dx=1)
    pR = spl.ev(xs, R, dy=1)
    A = lapse_factor(R, params.m)
    # d_t = d_x in both charts; d_{r*} = -d_u - A d_R or d_v - A d_R
    psi_t = px
    dpsi = sign * px - A * pR
    u = -rs
    c = 2.0 * (1.0 + u * R) / A
    xi = (u * u + c) * psi_t + c * dpsi
    return SigmaData(rs, psi, xi, dpsi, fld.l, params.m, fld.chart)


def taper(data: SigmaData, width: float) -> SigmaData:
    """
    Multiply the slice data by a smooth cutoff falling from 1 to 0 over the last ``width`` in r*.

    ``xi`` and ``dpsi`` are rebuilt from the product rule, so the result is
    again the data of one field and :func:`mirror` still commutes with it.
    """
    if width <= 0:
        return data
    top = data.rstar[-1]
    z = (top - data.rstar) / width
    chi = smooth_step(z)
    # dz/dr* = -1/width
    dchi = -smooth_step_derivative(z) / width
    psi_t = data.psi_t
    dpsi = chi * data.dpsi + dchi * data.psi
    out = SigmaData(data.rstar.copy(), chi * data.psi, np.zeros_like(dpsi), dpsi, data.l, data.m, data.chart, dict(data.meta))
    c = out.c
    out.xi = (data.rstar ** 2 + c) * chi * psi_t + c * dpsi
    out.meta["taper_width"] = width
    return out


def _solve_gated(theta: ScriProfile, direction: str, b: CoeffB, params: ChartParams, cfg: ScatterConfig) -> ModeField:
    if b.is_zero:
        return solve_goursat(theta, direction, b, params, cfg.NR)
    fld, report = picard_solve(theta, b, params, max_iter=cfg.picard_max_iter, NR=cfg.NR, direction=direction)
    if not report.converged or report.max_ratio >= cfg.contraction_gate:
        raise NoContraction(
            "data outside the small-data regime",
            ratios=report.ratios,
            deltas=report.deltas,
            gate=cfg.contraction_gate,
            norm=theta.norm,
        )
    fld.meta["picard"] = report.to_dict()
    return fld


def trace_T_plus_0(theta: ScriProfile, b: Optional[CoeffB], params: ChartParams,
                   cfg: ScatterConfig = ScatterConfig()) -> SigmaData:
    """
    Slice data of the solution whose future scri trace is ``theta``.

    The backward Goursat solve covers ``theta``'s lattice; the slice is read on
    ``r*`` from the wall to ``-u_min``.

    Raises
    ------
    NoContraction
        Nonlinear data whose Picard contraction ratio reaches the gate.
    """
    if theta.side != "plus":
        raise ValueError("trace_T_plus_0 expects a profile on future null infinity")
    b = zero_b() if b is None else b
    fld = _solve_gated(theta, "past", b, params, cfg)
    out = taper(read_sigma(fld, params, cfg.dr), cfg.taper_width)
    out.meta["worldtube_flux"] = fld.meta.get("worldtube_flux")
    return out


def trace_T_minus_0(theta_minus: ScriProfile, b: Optional[CoeffB], params: ChartParams,
                    cfg: ScatterConfig = ScatterConfig()) -> SigmaData:
    """``T_-^0 = mirror . T_+^0 . reflect``; ``b`` must be static for this to be exact."""
    if theta_minus.side != "minus":
        raise ValueError("trace_T_minus_0 expects a profile on past null infinity")
    return mirror(trace_T_plus_0(reflect_profile(theta_minus), b, params, cfg))


def trace_T_minus_0_direct(theta_minus: ScriProfile, b: Optional[CoeffB], params: ChartParams,
                           cfg: ScatterConfig = ScatterConfig()) -> SigmaData:
    """Future-directed Goursat solve from past null infinity in the advanced chart."""
    if theta_minus.side != "minus":
        raise ValueError("expects a profile on past null infinity")
    b = zero_b() if b is None else b
    fld = _solve_gated(theta_minus, "future", b, params, cfg)
    return taper(read_sigma(fld, params, cfg.dr), cfg.taper_width)


# ---------------------------------------------------------------------------
# Slice -> null infinity
# ---------------------------------------------------------------------------

class _MultiRecorder:
    def __init__(self, centres):
        self.idx = [np.arange(c - 2, c + 3) for c in centres]
        self.t = []
        self.rows = [[] for _ in centres]

    def __call__(self, t, psi):
        self.t.append(t)
        for k, ix in enumerate(self.idx):
            self.rows[k].append(psi[ix].copy())

    def view(self, k):
        rec = _View(np.asarray(self.t), np.asarray(self.rows[k]))
        return rec


@dataclass
class _View:
    t: np.ndarray
    rows: np.ndarray

    def array(self):
        return self.t, self.rows


def _march_lattice(u_c: float, h: float, u_hi: float) -> np.ndarray:
    n = max(int(np.ceil((u_hi - u_c) / h - 1e-9)) + 1, 7)
    return u_c + h * np.arange(n)


def _march_to_scri(t, H, rstar_E, u_out, l, b, params, cfg):
    m = params.m
    h = float(u_out[1] - u_out[0])
    u_c = -rstar_E
    u_m = _march_lattice(u_c, h, float(u_out[-1]))
    R_E = 1.0 / float(r_of_rstar(rstar_E, m))
    R = np.linspace(0.0, R_E, cfg.NR_extract)
    H_top = sample_series(t, H, u_m + rstar_E)
    if b.is_zero or b.static:
        fixed = np.asarray(b(0.0, R), dtype=float).copy()
        bcols = lambda k: fixed  # noqa: E731
    else:
        bcols = lambda k: np.asarray(b(np.full(R.size, u_m[k]), R), dtype=float)  # noqa: E731
    cols = march_from_worldtube(H_top, h, R, l, m, bcols)
    scri = cols[:, 0]
    inside = u_out >= u_c
    out = np.zeros_like(u_out)
    if np.any(inside):
        P = interp_matrix(u_m[0], h, u_m.size, u_out[inside])
        out[inside] = P @ scri
    return out


def trace_T0_plus(data: SigmaData, b: Optional[CoeffB], params: ChartParams, u_out: np.ndarray,
                  cfg: ScatterConfig = ScatterConfig()) -> ScriProfile:
    """
    Future scri trace of the solution with slice data ``data``.

    Leapfrog evolution in ``(t, r*)``, a worldtube record at ``r*_E``, then a
    forward characteristic march from the cone ``u_c = -r*_E`` (where the field
    vanishes by causality) to null infinity.

    Parameters
    ----------
    data : SigmaData
        Its lattice must be the first part of the Cauchy lattice (wall start,
        spacing ``cfg.dr``) and end at or before ``r*_E``.
    u_out : ndarray
        Uniform output lattice; samples before ``u_c`` are zero.

    Raises
    ------
    ExtractionInconsistency
        If a second extraction radius is configured and the traces differ by
        more than ``cfg.extraction_tol`` in relative H^1 norm.
    """
    b = zero_b() if b is None else b
    if abs(data.dr - cfg.dr) > 1e-12 * cfg.dr or abs(data.rstar[0] - params.rstar_wall) > 1e-9:
        raise ValueError("SigmaData lattice does not match the Cauchy lattice")
    u_out = np.asarray(u_out, dtype=float)
    radii = [cfg.rstar_extract] + ([cfg.rstar_extract_alt] if cfg.rstar_extract_alt is not None else [])
    if data.rstar[-1] > min(radii) + 1e-9:
        nz = np.nonzero((data.rstar > min(radii)) & ((data.psi != 0) | (data.xi != 0)))[0]
        if nz.size:
            raise ValueError("slice data extend beyond the extraction radius")
    h = float(u_out[1] - u_out[0])
    t_end = max(float(_march_lattice(-r, h, float(u_out[-1]))[-1]) + r for r in radii) + 8.0 * cfg.cfl * cfg.dr
    rs_top = max(data.rstar[-1], max(radii)) + t_end + cfg.edge_margin
    rs = make_lattice(params.rstar_wall, rs_top, cfg.dr)
    n = data.rstar.size
    psi = np.zeros(rs.size)
    pi = np.zeros(rs.size)
    psi[:n] = data.psi
    pi[:n] = data.psi_t
    centres = [int(round((r - params.rstar_wall) / cfg.dr)) for r in radii]
    rec = _MultiRecorder(centres)
    state = CauchyState(data.l, rs, psi, pi, 0.0, cfg.cfl * cfg.dr, params.m)
    evolve_cauchy(state, b, params, t_end, recorder=rec)
    traces = []
    for k, c in enumerate(centres):
        t, _, H = worldtube_series(rec.view(k), cfg.dr)
        traces.append(_march_to_scri(t, H, float(rs[c]), u_out, data.l, b, params, cfg))
    prof = ScriProfile(u_out.copy(), traces[0], data.l, None, "plus")
    if len(traces) > 1:
        alt = prof.with_theta(traces[1])
        diff = h1_scri_norm(prof.with_theta(traces[0] - traces[1]))
        ref = max(prof.norm, alt.norm)
        rel = diff / ref if ref > 0 else diff
        if rel > cfg.extraction_tol:
            raise ExtractionInconsistency(
                "traces from the two extraction radii disagree",
                relative_h1=rel,
                tol=cfg.extraction_tol,
                radii=[float(rs[c]) for c in centres],
            )
    return prof


def trace_T0_minus(data: SigmaData, b: Optional[CoeffB], params: ChartParams, v_out: np.ndarray,
                   cfg: ScatterConfig = ScatterConfig()) -> ScriProfile:
    """``T_0^- = reflect . T_0^+ . mirror``; returns a profile on past null infinity over ``v_out``."""
    v_out = np.asarray(v_out, dtype=float)
    plus = trace_T0_plus(mirror(data), b, params, -v_out[::-1], cfg)
    return reflect_profile(plus)


def scattering_operator(theta_minus: ScriProfile, b: Optional[CoeffB], params: ChartParams,
                        cfg: ScatterConfig = ScatterConfig()) -> ScriProfile:
    """``S = T_0^+ . T_-^0``; the output lattice is the reflection of the input lattice."""
    sigma = trace_T_minus_0(theta_minus, b, params, cfg)
    return trace_T0_plus(sigma, b, params, -theta_minus.u[::-1], cfg)


def scattering_inverse(theta_plus: ScriProfile, b: Optional[CoeffB], params: ChartParams,
                       cfg: ScatterConfig = ScatterConfig()) -> ScriProfile:
    """``S^{-1} = T_0^- . T_+^0``; the output lattice is the reflection of the input lattice."""
    sigma = trace_T_plus_0(theta_plus, b, params, cfg)
    return trace_T0_minus(sigma, b, params, -theta_plus.u[::-1], cfg)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def sigma_energy(data: SigmaData, b: Optional[CoeffB] = None) -> float:
    """
    Morawetz energy of the slice data (the ``s = 1`` leaf).

    The jets in the retarded chart are ``psi_u = psi_t`` and
    ``psi_R = -(psi_t + d_{r*} psi) / (R^2 F)``; the leaf is parametrised by
    ``u = -r*`` so ``du = -dr*``.
    """
    b = zero_b() if b is None else b
    R = data.R
    u = -data.rstar
    pt = data.psi_t
    pR = -(pt + data.dpsi) / lapse_factor(R, data.m)
    bv = b(u, R)
    dens = integrand_Hs(data.psi, pt, pR, u, R, 1.0, data.m, bv, data.l)
    return float(4.0 * np.pi * np.trapezoid(dens, data.rstar))


def relative_h1_difference(a: ScriProfile, b_: ScriProfile) -> float:
    """``|a - b| / |b|`` in the scri H^1 norm; profiles must share a lattice."""
    if a.u.shape != b_.u.shape or np.max(np.abs(a.u - b_.u)) > 1e-9 * (1 + np.max(np.abs(b_.u))):
        raise ValueError("profiles live on different lattices")
    d = h1_scri_norm(b_.with_theta(a.theta - b_.theta))
    ref = b_.norm
    return d / ref if ref > 0 else d


def sigma_difference(a: SigmaData, b_: SigmaData) -> float:
    """Largest relative difference of ``psi`` and ``xi`` between two slice data sets."""
    if a.rstar.shape != b_.rstar.shape:
        raise ValueError("slice data on different lattices")
    out = 0.0
    for x, y in ((a.psi, b_.psi), (a.xi, b_.xi)):
        scale = max(float(np.max(np.abs(y))), 1e-300)
        out = max(out, float(np.max(np.abs(x - y))) / scale)
    return out
