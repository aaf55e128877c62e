"""
Desk-scale labs: Sobolev constants on shrinking balls, the density cutoff,
Lipschitz ratios of the trace maps, the slowed-down Goursat problem and the
scalar Picard bound.

Every lab returns a :class:`LabResult` with the sweep, the measured columns,
a fit and a pass flag against the tolerance it declares.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import RectBivariateSpline

from .chart import ChartParams, lapse_factor
from .coeff import CoeffB, smooth_step, smooth_step_derivative, zero_b
from .errors import CFLViolation, NoContraction
from .nullgrid import (
    PicardReport,
    ScriProfile,
    _slice_norm,
    fixed_point_analysis,
    picard_sequence,
    picard_solve,
    solve_goursat,
)
from .energy import h1_scri_norm
from . import scatter as sc


@dataclass
class LabResult:
    """Outcome of one lab sweep."""

    name: str
    sweep_name: str
    sweep: list
    measured: dict
    fit: dict = field(default_factory=dict)
    passed: bool = False
    tolerance: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.sweep) < 5:
            raise ValueError("a lab sweep needs at least 5 points")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=float)

    def to_csv(self) -> str:
        """Sweep table with 17 significant digits."""
        cols = [k for k, v in self.measured.items() if isinstance(v, (list, tuple)) and len(v) == len(self.sweep)]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.sweep_name] + cols)
        for i, x in enumerate(self.sweep):
            w.writerow([_fmt(x)] + [_fmt(self.measured[c][i]) for c in cols])
        return buf.getvalue()


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def loglog_fit(x, y) -> dict:
    """Least-squares line through ``(log x, log y)``; returns exponent, constant and RMS residual."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + icpt)
    return {"exponent": float(slope), "constant": float(math.exp(icpt)), "residual": float(np.sqrt(np.mean(resid ** 2)))}


# ---------------------------------------------------------------------------
# Sobolev constants on balls
# ---------------------------------------------------------------------------

def _bump(s):
    return math.exp(-1.0 / (1.0 - s * s)) if s < 1.0 else 0.0


def _bump_d(s):
    if s >= 1.0:
        return 0.0
    q = 1.0 - s * s
    return -2.0 * s / (q * q) * math.exp(-1.0 / q)


SOBOLEV_FAMILIES = {
    "constant": (lambda s: 1.0, lambda s: 0.0),
    "bump": (_bump, _bump_d),
}


def sobolev_cone_lab(t_values: Sequence[float], family: str = "constant", band: float = 2.0,
                     slope_tol: float = 0.1) -> LabResult:
    """
    H^1 to L^6 ratios for radial functions ``u(x) = f(|x|/t)`` on balls of radius ``t`` in R^3.

    ``unweighted = |u|_6 / (|grad u|^2 + |u|^2)^{1/2}`` and
    ``weighted = |u|_6 / (|grad u|^2 + t^{-2} |u|^2)^{1/2}``.

    Parameters
    ----------
    t_values : sequence of float
        Radii; must span at least one decade.
    family : {"constant", "bump"}
    band : float
        Allowed ``max/min`` of the weighted ratio.
    slope_tol : float
        Allowed deviation of the unweighted log-log slope from -1 (constant family only).
    """
    t = np.asarray(sorted(t_values), dtype=float)
    if t[-1] / t[0] < 10.0 * (1 - 1e-12):
        raise ValueError("t_values must span at least one decade")
    f, df = SOBOLEV_FAMILIES[family]
    # integrals over the unit ball, then exact scaling in t
    i6 = 4.0 * math.pi * quad(lambda s: f(s) ** 6 * s * s, 0.0, 1.0, epsabs=0, epsrel=1e-13)[0]
    i2 = 4.0 * math.pi * quad(lambda s: f(s) ** 2 * s * s, 0.0, 1.0, epsabs=0, epsrel=1e-13)[0]
    ig = 4.0 * math.pi * quad(lambda s: df(s) ** 2 * s * s, 0.0, 1.0, epsabs=0, epsrel=1e-13)[0]
    l6 = (i6 * t ** 3) ** (1.0 / 6.0)
    grad = ig * t
    l2 = i2 * t ** 3
    unweighted = l6 / np.sqrt(grad + l2)
    weighted = l6 / np.sqrt(grad + l2 / t ** 2)
    fit = loglog_fit(t, unweighted)
    spread = float(weighted.max() / weighted.min())
    passed = spread <= band
    if family == "constant":
        passed = passed and abs(fit["exponent"] + 1.0) <= slope_tol
    return LabResult(
        name="sobolev",
        sweep_name="t",
        sweep=t.tolist(),
        measured={"unweighted": unweighted.tolist(), "weighted": weighted.tolist(), "weighted_spread": spread},
        fit=fit,
        passed=bool(passed),
        tolerance={"band": band, "slope_tol": slope_tol},
        notes={"family": family},
    )


# ---------------------------------------------------------------------------
# Density cutoff on the unit ball
# ---------------------------------------------------------------------------

def density_profile(s):
    """Smooth ``f`` with ``f = 0`` on [0, 1/3] and ``f = 1`` on [1/2, inf)."""
    return smooth_step(6.0 * (np.asarray(s, dtype=float) - 1.0 / 3.0))


def density_profile_derivative(s):
    return 6.0 * smooth_step_derivative(6.0 * (np.asarray(s, dtype=float) - 1.0 / 3.0))


def density_cutoff_lab(n_values: Sequence[int], exponent_tol: float = 0.05) -> LabResult:
    """
    ``|1 - psi_n|_{H^1(B(0,1))}`` for ``psi_n(x) = f(n|x|)``.

    Checks monotone decay, the bound
    ``|1 - psi_n|^2 <= (4π/3)(∫_0^1 (1 - f(nr))^2 dr + sup(f'^2)/n)``
    and a fitted decay exponent near -1/2.
    """
    n = np.asarray(sorted(n_values), dtype=float)
    grid = np.linspace(1.0 / 3.0, 0.5, 20001)
    sup_d2 = float(np.max(density_profile_derivative(grid)) ** 2)
    norms, bounds = [], []
    for nn in n:
        lo, hi = 1.0 / (3.0 * nn), min(1.0, 1.0 / (2.0 * nn))
        one_minus = lambda r: (1.0 - float(density_profile(nn * r))) ** 2  # noqa: E731
        vol = 4.0 * math.pi * (
            quad(lambda r: r * r, 0.0, min(lo, 1.0), epsabs=0, epsrel=1e-13)[0]
            + (quad(lambda r: one_minus(r) * r * r, lo, hi, epsabs=0, epsrel=1e-12)[0] if lo < 1 else 0.0)
        )
        gradt = 4.0 * math.pi * quad(
            lambda r: (nn * float(density_profile_derivative(nn * r))) ** 2 * r * r, lo, hi, epsabs=0, epsrel=1e-12
        )[0] if lo < 1 else 0.0
        norms.append(math.sqrt(vol + gradt))
        lin = min(lo, 1.0) + (quad(one_minus, lo, hi, epsabs=0, epsrel=1e-12)[0] if lo < 1 else 0.0)
        bounds.append(4.0 * math.pi / 3.0 * (lin + sup_d2 / nn))
    norms = np.asarray(norms)
    bounds = np.asarray(bounds)
    fit = loglog_fit(n, norms)
    monotone = bool(np.all(np.diff(norms) < 0))
    bound_ok = bool(np.all(norms ** 2 <= bounds))
    passed = monotone and bound_ok and abs(fit["exponent"] + 0.5) <= exponent_tol
    return LabResult(
        name="density",
        sweep_name="n",
        sweep=n.tolist(),
        measured={"norm": norms.tolist(), "bound": bounds.tolist(), "monotone": monotone, "bound_ok": bound_ok},
        fit=fit,
        passed=passed,
        tolerance={"exponent_tol": exponent_tol},
        notes={"sup_fprime_sq": sup_d2},
    )


# ---------------------------------------------------------------------------
# Lipschitz ratios
# ---------------------------------------------------------------------------

def _bump_profile(u, centre, width):
    z = (u - centre) / width
    out = np.zeros_like(u)
    m = np.abs(z) < 1
    out[m] = np.exp(-1.0 / (1.0 - z[m] ** 2)) * math.e
    return out


def random_profiles(u: np.ndarray, n: int, seed: int, support: tuple, radius: float, l: int = 0,
                    side: str = "plus", n_bumps: int = 3) -> list:
    """``n`` random sums of smooth bumps inside ``support`` with amplitudes in ``[-radius, radius]``."""
    rng = np.random.default_rng(seed)
    a, b = support
    out = []
    for _ in range(n):
        th = np.zeros_like(u)
        for _ in range(n_bumps):
            w = rng.uniform(0.15, 0.35) * (b - a)
            c = rng.uniform(a + w, b - w)
            th += rng.uniform(-radius, radius) * _bump_profile(u, c, w)
        th = np.where((u >= a) & (u <= b), th, 0.0)
        out.append(ScriProfile(u.copy(), th, l, (a, b), side))
    return out


def _sigma_minus(d1: sc.SigmaData, d2: sc.SigmaData) -> sc.SigmaData:
    return sc.SigmaData(d1.rstar.copy(), d1.psi - d2.psi, d1.xi - d2.xi, d1.dpsi - d2.dpsi, d1.l, d1.m, d1.chart)


def lipschitz_lab(pairs: Sequence[tuple], map_name: str, b: Optional[CoeffB], params: ChartParams,
                  cfg: sc.ScatterConfig = sc.ScatterConfig()) -> LabResult:
    """
    Ratios of output to input difference sizes over pairs of scri profiles.

    ``map_name`` selects the map and the two sides of the ratio:

    * ``"T+0"``: ``E_{diff}(Sigma_0) / |theta_1 - theta_2|^2``;
    * ``"T0+"``: inputs are ``T_+^0(theta_i)``; ``|T_0^+ diff|^2 / E_{diff}(Sigma_0)``;
    * ``"S"``: profiles on past null infinity; ``|S diff|^2 / |theta_1 - theta_2|^2``.

    Identical pairs are skipped.
    """
    b = zero_b() if b is None else b
    cache: dict = {}

    def once(key, fn, *args):
        if key not in cache:
            cache[key] = fn(*args)
        return cache[key]

    def t_plus(th):
        return once(("T+0", id(th)), sc.trace_T_plus_0, th, b, params, cfg)

    def t_out(th):
        return once(("T0+", id(th)), sc.trace_T0_plus, t_plus(th), b, params, th.u, cfg)

    def s_op(th):
        return once(("S", id(th)), sc.scattering_operator, th, b, params, cfg)

    ratios = []
    kept = []
    for k, (t1, t2) in enumerate(pairs):
        din = h1_scri_norm(t1.with_theta(t1.theta - t2.theta))
        if din == 0.0:
            continue
        if map_name == "T+0":
            ratios.append(sc.sigma_energy(_sigma_minus(t_plus(t1), t_plus(t2))) / din ** 2)
        elif map_name == "T0+":
            e_in = sc.sigma_energy(_sigma_minus(t_plus(t1), t_plus(t2)))
            o1, o2 = t_out(t1), t_out(t2)
            ratios.append(h1_scri_norm(o1.with_theta(o1.theta - o2.theta)) ** 2 / e_in)
        elif map_name == "S":
            o1, o2 = s_op(t1), s_op(t2)
            ratios.append(h1_scri_norm(o1.with_theta(o1.theta - o2.theta)) ** 2 / din ** 2)
        else:
            raise ValueError("map_name must be 'T+0', 'T0+' or 'S'")
        kept.append(k)
    ratios = np.asarray(ratios)
    finite = bool(ratios.size and np.all(np.isfinite(ratios)) and np.all(ratios > 0))
    return LabResult(
        name="lipschitz",
        sweep_name="pair",
        sweep=kept,
        measured={"ratio": ratios.tolist()},
        fit={"max_ratio": float(ratios.max()) if ratios.size else float("nan")},
        passed=finite,
        notes={"map": map_name, "b": b.description},
    )


# ---------------------------------------------------------------------------
# Slowed-down Goursat problem
# ---------------------------------------------------------------------------

def slowed_inverse_metric(x, lam: float, m: float):
    """
    ``(G^tt, G^tx, G^xx)`` of the slowed metric in the coordinates ``t' = u - R``, ``x = R``.

    The rescaled metric reads ``N^2 dt'^2 - h (dx + beta dt')^2`` with
    ``h = 2 - A``, ``beta = (1 - A)/h`` and ``N^2 = 1/h``; slowing multiplies
    ``N^2`` by ``lam^2``.  The volume density is ``lam``, independent of ``x``.
    """
    A = lapse_factor(x, m)
    h = 2.0 - A
    gtt = h / lam ** 2
    gtx = -(1.0 - A) / lam ** 2
    gxx = ((1.0 - A) ** 2 - lam ** 2) / (lam ** 2 * h)
    return gtt, gtx, gxx


def slowed_max_slope(x_max: float, lam: float, m: float) -> float:
    """Largest ``|dt'/dx|`` of the slowed light cones on ``[0, x_max]``."""
    x = np.linspace(0.0, x_max, 257)
    A = lapse_factor(x, m)
    gap = 1.0 - A - lam
    if np.any(gap <= 0):
        raise CFLViolation("null infinity side is not spacelike for this lambda on the lab strip", lam=lam, x_max=x_max)
    return float(np.max((2.0 - A) / gap))


def _d1(f, h):
    out = np.zeros_like(f)
    p = np.pad(f, 2)
    out[:] = (p[:-4] - 8.0 * p[1:-3] + 8.0 * p[3:-1] - p[4:]) / (12.0 * h)
    return out


def _d2(f, h):
    p = np.pad(f, 2)
    return (-p[:-4] + 16.0 * p[1:-3] - 30.0 * p[2:-2] + 16.0 * p[3:-1] - p[4:]) / (12.0 * h * h)


def solve_slowed(theta: ScriProfile, lam: float, b: CoeffB, params: ChartParams, x_samples: np.ndarray,
                 cfl: float = 0.5):
    """
    Integrate the slowed equation in ``x`` from null infinity with RK4.

    Data at ``x = 0``: ``psi = theta(t')`` and the flux
    ``w = G^xx psi_x + G^xt psi_t`` with ``psi_x = theta' + d_R psi``, where
    ``d_R psi = -(L/2) ∫_u^inf theta`` is the value forced on null infinity
    by the unslowed equation.

    Returns
    -------
    ndarray, shape (len(x_samples), len(theta.u))
    """
    m, l = params.m, theta.l
    L = l * (l + 1)
    tp = theta.u
    dt = theta.du
    slope = slowed_max_slope(float(x_samples[-1]), lam, m)
    dx_max = 2.0 * cfl * dt / slope
    th = theta.theta
    th_u = _d1(th, dt)
    tail = np.cumsum(th[::-1])[::-1] * dt - 0.5 * dt * th
    psi_R0 = -0.5 * L * tail
    gtt, gtx, gxx = slowed_inverse_metric(0.0, lam, m)
    psi = th.copy()
    w = gxx * (th_u + psi_R0) + gtx * th_u
    static = b.is_zero or b.static

    def rhs(x, psi, w):
        gtt, gtx, gxx = slowed_inverse_metric(x, lam, m)
        pt = _d1(psi, dt)
        ptt = _d2(psi, dt)
        px = (w - gtx * pt) / gxx
        pxt = (_d1(w, dt) - gtx * ptt) / gxx
        src = (L + 2.0 * m * x) * psi
        if not b.is_zero:
            bv = b(0.0, x) if static else b(tp + x, x)
            src = src + bv * psi ** 3
        return px, -gtt * ptt - gtx * pxt - src

    out = np.zeros((x_samples.size, tp.size))
    x = 0.0
    k = 0
    if abs(x_samples[0]) < 1e-15:
        out[0] = psi
        k = 1
    for j in range(k, x_samples.size):
        seg = x_samples[j] - x
        n = max(1, int(math.ceil(seg / dx_max - 1e-12)))
        hx = seg / n
        for _ in range(n):
            a1, b1 = rhs(x, psi, w)
            a2, b2 = rhs(x + 0.5 * hx, psi + 0.5 * hx * a1, w + 0.5 * hx * b1)
            a3, b3 = rhs(x + 0.5 * hx, psi + 0.5 * hx * a2, w + 0.5 * hx * b2)
            a4, b4 = rhs(x + hx, psi + hx * a3, w + hx * b3)
            psi = psi + hx / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
            w = w + hx / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
            x += hx
        if not np.all(np.isfinite(psi)):
            raise CFLViolation("slowed evolution blew up", lam=lam, x=x)
        out[j] = psi
    return out


def slowdown_lab(theta: ScriProfile, lambdas: Sequence[float], b: Optional[CoeffB], params: ChartParams,
                 R_lab: float = 0.05, n_samples: int = 11, NR: int = 513) -> LabResult:
    """
    Compare slowed solutions with the direct characteristic solution on ``0 <= R <= R_lab``.

    The L^2 difference is taken over the strip ``{0 <= x <= R_lab}`` in the
    ``(t', x)`` coordinates (trapezoid in both).  The slice energy ratio
    ``c_lambda = ∫(psi_t^2 + psi_x^2 + psi^2) dt' at x = R_lab`` over
    ``∫(theta'^2 + theta^2) du`` is recorded for every ``lambda``.
    """
    b = zero_b() if b is None else b
    lambdas = [float(v) for v in lambdas]
    if any(not 0.5 < v < 1.0 for v in lambdas) or lambdas != sorted(lambdas):
        raise ValueError("lambdas must increase inside (1/2, 1)")
    direct = solve_goursat(theta, "past", b, params, NR)
    spl = RectBivariateSpline(direct.x, direct.R, direct.values, kx=3, ky=3, s=0)
    xs = np.linspace(0.0, R_lab, n_samples)
    tp = theta.u
    X, T = np.meshgrid(xs, tp, indexing="ij")
    U = T + X
    inside = (U <= tp[-1]) & (U >= tp[0])
    ref = np.where(inside, spl.ev(np.clip(U, tp[0], tp[-1]), X), 0.0)
    dt = theta.du
    th_u = _d1(theta.theta, dt)
    scri_energy = float(np.trapezoid(th_u ** 2 + theta.theta ** 2, tp))
    diffs, c_lam = [], []
    for lam in lambdas:
        sol = solve_slowed(theta, lam, b, params, xs)
        d2 = np.trapezoid(np.trapezoid((sol - ref) ** 2 * inside, tp, axis=1), xs)
        diffs.append(float(math.sqrt(d2)))
        top = sol[-1]
        pt = _d1(top, dt)
        px = (sol[-1] - sol[-2]) / (xs[-1] - xs[-2])
        e = float(np.trapezoid(pt ** 2 + px ** 2 + top ** 2, tp))
        c_lam.append(e / scri_energy if scri_energy > 0 else 0.0)
    diffs_a = np.asarray(diffs)
    if np.all(diffs_a == 0):
        decreasing = True
    else:
        decreasing = bool(np.all(np.diff(diffs_a) < 0))
    fit = {}
    if np.all(diffs_a > 0):
        fit = loglog_fit(1.0 - np.asarray(lambdas), diffs_a)
    return LabResult(
        name="slowdown",
        sweep_name="lambda",
        sweep=lambdas,
        measured={"l2_difference": diffs, "c_lambda": c_lam, "decreasing": decreasing},
        fit=fit,
        passed=decreasing and bool(np.all(np.isfinite(c_lam))),
        notes={"R_lab": R_lab, "n_samples": n_samples, "A_at_R_lab": float(lapse_factor(R_lab, params.m))},
    )


# ---------------------------------------------------------------------------
# Picard machinery
# ---------------------------------------------------------------------------

def cardano_check(n: int = 1000, seed: int = 0) -> float:
    """
    Largest relative gap between the trigonometric roots and ``numpy.roots``.

    ``alpha`` is drawn log-uniformly in [1e-2, 1e2] and ``beta`` uniformly
    inside the admissible range ``beta^2 < 4/(27 alpha^3)``.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        alpha = 10.0 ** rng.uniform(-2, 2)
        bmax = math.sqrt(4.0 / (27.0 * alpha ** 3))
        beta = rng.uniform(0.0, 0.999) * bmax
        fp = fixed_point_analysis(alpha, beta)
        ref = np.sort(np.roots([1.0, 0.0, -1.0 / alpha, beta]).real)
        mine = np.sort([fp.lambda1, fp.lambda2, fp.lambda0])
        scale = max(1.0, float(np.max(np.abs(ref))))
        worst = max(worst, float(np.max(np.abs(mine - ref))) / scale)
    return worst


def picard_lab(theta: ScriProfile, b: CoeffB, params: ChartParams, scales: Sequence[float],
               NR: int = 257, max_iter: int = 60) -> LabResult:
    """
    Global Picard iteration on scaled data against the scalar bound sequence.

    For each scale ``s`` the data are ``s * theta``.  ``beta = |s theta|^2`` in
    the scri H^1 norm, ``C_0`` is the squared sup slice norm of the linear
    solution and ``alpha_est = C_0 / beta``.  Because ``C_0 <= alpha beta``
    holds for the true constant, ``alpha_est`` is a lower bound and the
    predicted regime ``beta^2 < 4/(27 alpha_est^3)`` is an optimistic one.
    """
    scales = [float(s) for s in scales]
    rows = {k: [] for k in ("beta", "alpha_est", "predicted", "max_ratio", "final_ratio", "converged",
                            "iterations", "c_limit", "lambda2")}
    for s in scales:
        th = theta.with_theta(s * theta.theta)
        beta = h1_scri_norm(th) ** 2
        lin = solve_goursat(th, "past", zero_b(), params, NR)
        C0 = _slice_norm(lin.values, lin.dR, th.l) ** 2
        alpha = C0 / beta if beta > 0 else float("nan")
        fp = fixed_point_analysis(alpha, beta) if beta > 0 else None
        predicted = bool(fp is not None and fp.small_data)
        try:
            _, rep = picard_solve(th, b, params, max_iter=max_iter, NR=NR)
        except NoContraction as exc:
            rep = PicardReport(exc.details.get("deltas", []), exc.details.get("ratios", []), False,
                               len(exc.details.get("deltas", [])))
        seq = picard_sequence(alpha, beta, 400) if beta > 0 else np.zeros(1)
        rows["beta"].append(beta)
        rows["alpha_est"].append(alpha)
        rows["predicted"].append(predicted)
        rows["max_ratio"].append(rep.max_ratio)
        rows["final_ratio"].append(rep.final_ratio)
        rows["converged"].append(rep.converged)
        rows["iterations"].append(rep.iterations)
        rows["c_limit"].append(float(seq[-1]))
        rows["lambda2"].append(fp.lambda2 if predicted else float("nan"))
    ok = all((r < 1.0 and c) for r, c, p in zip(rows["max_ratio"], rows["converged"], rows["predicted"]) if p)
    return LabResult(
        name="picard",
        sweep_name="scale",
        sweep=scales,
        measured=rows,
        fit={},
        passed=bool(ok),
        notes={"b": b.description, "NR": NR},
    )
