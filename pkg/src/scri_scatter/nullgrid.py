"""
Characteristic (Goursat) solver for one multipole on the (u, R) chart.

Writing ``A = R^2 (1 - 2mR)`` the mode equation is

    d_R (2 d_u psi + A d_R psi) = G psi + b psi^3,    G = l(l+1) + 2 m R .

Along an ingoing ray (``dR/du = A/2``) the derivative of ``psi`` is
``d_u psi + (A/2) d_R psi``, which integrates from null infinity to

    psi_{u|v}(u, R) = theta'(u) + (1/2) int_0^R (G psi + b psi^3) dR' .

The scheme transports the previous column along these rays (sixth-order
Lagrange interpolation at the ray foot, so the trapezoid rule sets the order) and integrates the right-hand side with the
trapezoid rule along the ray and in ``R``.  The cubic term is solved by a
fixed-point loop on each new column.  The inner worldtube ``R = R_max`` is a
Dirichlet wall; rays that hit it inside one step are cut at the wall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import sparse

from .chart import ChartParams, r_of_rstar, rstar_of_r
from .coeff import CoeffB, zero_b
from .errors import NoContraction, NonFiniteField, NonlinearDivergence, WorldtubeContamination

PICARD_TOL = 1e-13
PICARD_MAX_ITER = 200


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------

@dataclass
class ScriProfile:
    """
    Characteristic data ``theta(u)`` of one mode on null infinity.

    Parameters
    ----------
    u : ndarray
        Uniform lattice (retarded time on the future side, advanced time on the past side).
    theta : ndarray
    l : int
    support : (float, float), optional
        Declared support; ``theta`` must vanish outside it and it must lie
        strictly inside the lattice.
    side : str
        ``"plus"`` or ``"minus"``.
    """

    u: np.ndarray
    theta: np.ndarray
    l: int = 0
    support: Optional[tuple] = None
    side: str = "plus"
    _norm: Optional[float] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        if self.u.shape != self.theta.shape or self.u.ndim != 1:
            raise ValueError("u and theta must be 1-D arrays of equal length")
        if not np.all(np.isfinite(self.theta)):
            raise NonFiniteField("non-finite scri data")
        if self.support is not None:
            a, b = self.support
            if not (self.u[0] < a < b < self.u[-1]):
                raise ValueError("declared support must lie strictly inside the u-lattice")
            outside = (self.u < a) | (self.u > b)
            if np.any(self.theta[outside] != 0.0):
                raise ValueError("theta does not vanish outside its declared support")

    @classmethod
    def from_function(cls, f: Callable, u, support, l: int = 0, side: str = "plus") -> "ScriProfile":
        """Sample ``f`` and zero it outside ``support``."""
        u = np.asarray(u, dtype=float)
        th = np.asarray(f(u), dtype=float)
        a, b = support
        th = np.where((u >= a) & (u <= b), th, 0.0)
        return cls(u, th, l, tuple(support), side)

    @property
    def du(self) -> float:
        return float(self.u[1] - self.u[0])

    @property
    def norm(self) -> float:
        """Cached weighted H^1 norm on null infinity."""
        if self._norm is None:
            from .energy import h1_scri_norm

            self._norm = h1_scri_norm(self)
        return self._norm

    def with_theta(self, theta) -> "ScriProfile":
        return ScriProfile(self.u.copy(), np.asarray(theta, dtype=float), self.l, None, self.side)


@dataclass
class ModeField:
    """
    One mode sampled on a rectangular null lattice.

    ``values[j, k]`` is the field at null coordinate ``x[j]`` and ``R[k]``.
    The chart tag is ``"retarded"`` (x = u) or ``"advanced"`` (x = v).
    """

    l: int
    x: np.ndarray
    R: np.ndarray
    values: np.ndarray
    chart: str = "retarded"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            bad = np.argwhere(~np.isfinite(self.values))[0]
            raise NonFiniteField("non-finite field value", index=[int(bad[0]), int(bad[1])])

    @property
    def u(self) -> np.ndarray:
        return self.x

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def dR(self) -> float:
        return float(self.R[1] - self.R[0])

    def scri_trace(self) -> np.ndarray:
        return self.values[:, 0].copy()


# ---------------------------------------------------------------------------
# Equation
# ---------------------------------------------------------------------------

def source_term(psi, R, l: int, m: float, bvals):
    """``G psi + b psi^3`` with ``G = l(l+1) + 2 m R``."""
    return (l * (l + 1) + 2.0 * m * R) * psi + bvals * psi ** 3


def reduced_equation_rhs(psi, dpsi_R, d2psi_R, R, l: int, m: float, bvals=0.0):
    """
    Right-hand side ``G`` of ``2 d_u d_R psi = G``.

    ``G = -d_R(A d_R psi) + (l(l+1) + 2mR) psi + b psi^3``.
    """
    R = np.asarray(R, dtype=float)
    A = R * R * (1.0 - 2.0 * m * R)
    dA = 2.0 * R - 6.0 * m * R * R
    return -(dA * dpsi_R + A * d2psi_R) + source_term(psi, R, l, m, bvals)


# ---------------------------------------------------------------------------
# Lattice helpers
# ---------------------------------------------------------------------------

def lagrange_weights(xi):
    """Cubic Lagrange weights for nodes at -1, 0, 1, 2 evaluated at ``xi``."""
    xi = np.asarray(xi, dtype=float)
    return np.stack(
        [
            -xi * (xi - 1.0) * (xi - 2.0) / 6.0,
            (xi + 1.0) * (xi - 1.0) * (xi - 2.0) / 2.0,
            -(xi + 1.0) * xi * (xi - 2.0) / 2.0,
            (xi + 1.0) * xi * (xi - 1.0) / 6.0,
        ],
        axis=-1,
    )


def lagrange_weights_n(xi, npts: int):
    """Lagrange weights for nodes at ``-(npts//2 - 1), ..., npts//2`` evaluated at ``xi``."""
    xi = np.asarray(xi, dtype=float)
    nodes = np.arange(-(npts // 2 - 1), npts // 2 + 1, dtype=float)
    w = np.ones(xi.shape + (npts,))
    for j, xj in enumerate(nodes):
        for k, xk in enumerate(nodes):
            if k != j:
                w[..., j] *= (xi - xk) / (xj - xk)
    return w


def interp_matrix(x0: float, dx: float, n: int, points, npts: int = 6) -> sparse.csr_matrix:
    """
    Sparse Lagrange interpolation on a uniform lattice.

    ``npts`` even; stencils are shifted inwards near the lattice ends.
    """
    pts = np.asarray(points, dtype=float)
    if n < npts:
        raise ValueError(f"need at least {npts} lattice points")
    half = npts // 2
    pos = (pts - x0) / dx
    i = np.clip(np.floor(pos).astype(int), half - 1, n - half - 1)
    w = lagrange_weights_n(pos - i, npts)
    rows = np.repeat(np.arange(pts.size), npts)
    cols = (i[:, None] + np.arange(-(half - 1), half + 1)[None, :]).ravel()
    return sparse.csr_matrix((w.ravel(), (rows, cols)), shape=(pts.size, n))


def cubic_interp_matrix(x0: float, dx: float, n: int, points) -> sparse.csr_matrix:
    """Cubic case of :func:`interp_matrix`."""
    return interp_matrix(x0, dx, n, points, 4)


def _cumtrapz(g, dR):
    out = np.empty_like(g)
    out[0] = 0.0
    np.cumsum(0.5 * dR * (g[1:] + g[:-1]), out=out[1:])
    return out


def _slice_norm(delta, dR, l):
    """sup over null slices of the discrete slice H^1 norm."""
    grad = np.diff(delta, axis=1) / dR
    e = np.sum(grad ** 2, axis=1) * dR + (1.0 + l * (l + 1)) * np.trapezoid(delta ** 2, dx=dR, axis=1)
    return float(np.sqrt(np.max(e))) if e.size else 0.0


@dataclass
class _RayGeometry:
    R: np.ndarray
    dR: float
    h: float
    P: sparse.csr_matrix
    wall_rows: np.ndarray
    wall_delta: np.ndarray


def _inward_geometry(R: np.ndarray, h: float, m: float) -> _RayGeometry:
    """Ray feet one step back along rays that move towards the worldtube."""
    NR = R.size
    dR = float(R[1] - R[0])
    rs = np.full(NR, np.inf)
    rs[1:] = rstar_of_r(1.0 / R[1:], m)
    rs_w = rs[-1]
    target = rs - 0.5 * h
    hit = np.zeros(NR, dtype=bool)
    hit[1:] = target[1:] < rs_w
    feet = np.zeros(NR)
    ok = (~hit) & (np.arange(NR) > 0)
    feet[ok] = 1.0 / np.asarray(r_of_rstar(target[ok], m))
    feet[hit] = R[-1]
    P = interp_matrix(0.0, dR, NR, feet).tolil()
    rows = np.nonzero(hit)[0]
    for k in rows:
        P.rows[k] = []
        P.data[k] = []
    P = P.tocsr()
    delta = 2.0 * (rs[rows] - rs_w)
    return _RayGeometry(R, dR, h, P, rows, delta)


def _outward_geometry(R: np.ndarray, h: float, m: float) -> _RayGeometry:
    """Ray feet one step back along rays that move towards null infinity."""
    NR = R.size
    dR = float(R[1] - R[0])
    feet = np.zeros(NR)
    rs = rstar_of_r(1.0 / R[1:], m)
    feet[1:] = 1.0 / np.asarray(r_of_rstar(rs + 0.5 * h, m))
    P = interp_matrix(0.0, dR, NR, feet)
    return _RayGeometry(R, dR, h, P, np.zeros(0, dtype=int), np.zeros(0))


# ---------------------------------------------------------------------------
# Marching engines
# ---------------------------------------------------------------------------

def _column_fixed_point(update, guess, tol, max_iter, where):
    psi = guess
    prev_err = np.inf
    growth = 0
    for it in range(max_iter):
        new = update(psi)
        err = float(np.max(np.abs(new - psi)))
        scale = max(1.0, float(np.max(np.abs(new))))
        psi = new
        if err <= tol * scale:
            return psi, it + 1
        growth = growth + 1 if err > prev_err else 0
        prev_err = err
        if growth >= 5 or not math.isfinite(err):
            break
    raise NonlinearDivergence("column fixed-point loop failed to converge", column=where, last_update=err)


def march_from_scri(theta: np.ndarray, h: float, R: np.ndarray, l: int, m: float,
                    bcols: Callable[[int], np.ndarray], frozen: Optional[np.ndarray] = None,
                    tol: float = PICARD_TOL, max_iter: int = PICARD_MAX_ITER) -> np.ndarray:
    """
    March data given on ``R = 0`` towards the worldtube wall.

    ``theta`` is listed in marching order and column 0 starts at rest.  The
    same recurrence serves the past-directed solve in the retarded chart and
    the future-directed solve in the advanced chart.

    Parameters
    ----------
    theta : ndarray
        Data in marching order.
    h : float
        Positive step of the null coordinate.
    R : ndarray
        Uniform lattice ending at the wall.
    bcols : callable
        ``bcols(n)`` returns ``b`` on column ``n``.
    frozen : ndarray, optional
        If given, the cubic term uses ``frozen[n]**3`` instead of the unknown
        (one step of the global Picard iteration).

    Returns
    -------
    ndarray
        Field columns in marching order, shape ``(len(theta), len(R))``.
    """
    N, NR = theta.size, R.size
    geo = _inward_geometry(R, h, m)
    dR = geo.dR
    G = l * (l + 1) + 2.0 * m * R
    rows, delta = geo.wall_rows, geo.wall_delta
    frac = delta / h
    # theta at the wall crossing; stencil nodes (n+2, n+1, n, n-1) sit at xi = -1, 0, 1, 2
    wth = lagrange_weights(frac)
    out = np.zeros((N, NR))
    out[0, 0] = theta[0]
    b_prev = bcols(0)

    def g_of(psi, bv, fr):
        if fr is None:
            return G * psi + bv * psi ** 3
        return G * psi + bv * fr ** 3

    I_old = _cumtrapz(g_of(out[0], b_prev, None if frozen is None else frozen[0]), dR)
    for n in range(N - 1):
        old = out[n]
        bv = bcols(n + 1)
        fr = None if frozen is None else frozen[n + 1]
        idx = np.clip(np.array([n + 2, n + 1, n, n - 1]), 0, N - 1)
        th_wall = wth @ theta[idx] if rows.size else np.zeros(0)
        dth = theta[n + 1] - theta[n]
        base = geo.P @ old + dth - 0.25 * h * (geo.P @ I_old)
        base_w = (theta[n + 1] - th_wall) - 0.25 * delta * frac * I_old[-1]
        coef = np.full(NR, 0.25 * h)
        coef[rows] = 0.25 * delta

        def update(psi):
            I_new = _cumtrapz(g_of(psi, bv, fr), dR)
            new = base - coef * I_new
            if rows.size:
                new[rows] = base_w - 0.25 * delta * ((1.0 - frac) * I_new[-1] + I_new[rows])
            new[0] = theta[n + 1]
            new[-1] = 0.0
            return new

        guess = base - coef * I_old
        new, _ = _column_fixed_point(update, guess, tol, max_iter, n + 1)
        out[n + 1] = new
        I_old = _cumtrapz(g_of(new, bv, fr), dR)
    if not np.all(np.isfinite(out)):
        raise NonFiniteField("non-finite value while marching")
    return out


def march_from_worldtube(H_top: np.ndarray, h: float, R: np.ndarray, l: int, m: float,
                         bcols: Callable[[int], np.ndarray], initial: Optional[np.ndarray] = None,
                         tol: float = PICARD_TOL, max_iter: int = PICARD_MAX_ITER) -> np.ndarray:
    """
    Future-directed march in the retarded chart with data on the top line ``R = R[-1]``.

    ``H_top[n]`` is ``psi_{u|v}`` at the top line on column ``n``, so that

        psi_{u|v}(u, R) = H_top(u) - (1/2) int_R^{R_top} (G psi + b psi^3) dR' .

    Parameters
    ----------
    H_top : ndarray
    h : float
    R : ndarray
        Uniform lattice from 0 to the extraction radius.
    initial : ndarray, optional
        Field on the first cone (zero by default).
    """
    N, NR = H_top.size, R.size
    geo = _outward_geometry(R, h, m)
    dR = geo.dR
    G = l * (l + 1) + 2.0 * m * R
    out = np.zeros((N, NR))
    if initial is not None:
        out[0] = initial

    def J_of(psi, bv):
        I = _cumtrapz(G * psi + bv * psi ** 3, dR)
        return I[-1] - I

    J_old = J_of(out[0], bcols(0))
    for n in range(N - 1):
        bv = bcols(n + 1)
        base = geo.P @ out[n] + 0.5 * h * (H_top[n] + H_top[n + 1]) - 0.25 * h * (geo.P @ J_old)

        def update(psi):
            return base - 0.25 * h * J_of(psi, bv)

        new, _ = _column_fixed_point(update, base - 0.25 * h * J_old, tol, max_iter, n + 1)
        out[n + 1] = new
        J_old = J_of(new, bv)
    if not np.all(np.isfinite(out)):
        raise NonFiniteField("non-finite value while marching")
    return out


# ---------------------------------------------------------------------------
# Public solvers
# ---------------------------------------------------------------------------

def _b_columns(b: CoeffB, x: np.ndarray, R: np.ndarray, m: float, chart: str, order: np.ndarray):
    if b.is_zero:
        zeros = np.zeros(R.size)
        return lambda n: zeros
    if b.static:
        fixed = np.asarray(b(0.0, R), dtype=float).copy()
        return lambda n: fixed
    rs = np.full(R.size, np.inf)
    rs[1:] = rstar_of_r(1.0 / R[1:], m)

    def cols(n):
        xv = x[order[n]]
        if chart == "retarded":
            u = np.full(R.size, xv)
        else:
            u = xv - 2.0 * rs
            u[0] = -np.inf
        with np.errstate(invalid="ignore"):
            vals = b(np.where(np.isfinite(u), u, 0.0), R)
        return np.asarray(vals, dtype=float).copy()

    return cols


def _check_nonlinear_mode(l: int, b: CoeffB):
    if l > 0 and not b.is_zero:
        raise ValueError("nonlinear runs are restricted to l = 0")


def solve_goursat(theta: ScriProfile, direction: str = "past", b: Optional[CoeffB] = None,
                  params: Optional[ChartParams] = None, NR: int = 257,
                  frozen: Optional[np.ndarray] = None, strict_worldtube: bool = False,
                  worldtube_tol: float = 1e-10) -> ModeField:
    """
    Solve the characteristic problem with data on null infinity.

    Parameters
    ----------
    theta : ScriProfile
        Data on future null infinity for ``direction="past"`` (retarded chart),
        or on past null infinity for ``direction="future"`` (advanced chart).
    direction : {"past", "future"}
    b : CoeffB, optional
        Zero by default.
    params : ChartParams
        Supplies ``m`` and the wall ``R_max``.
    NR : int
        Number of R-lattice points including both ends.
    frozen : ndarray, optional
        Field whose cube replaces the unknown's cube (global Picard step).
    strict_worldtube : bool
        Raise :class:`WorldtubeContamination` when the wall flux exceeds
        ``worldtube_tol`` on the part of the wall at ``t >= 0``.

    Returns
    -------
    ModeField
        ``values`` indexed by the lattice of ``theta`` and ``R``; its trace on
        ``R = 0`` equals ``theta`` exactly.
    """
    if params is None:
        raise ValueError("params required")
    b = zero_b() if b is None else b
    _check_nonlinear_mode(theta.l, b)
    x = theta.u
    R = np.linspace(0.0, params.R_max, NR)
    h = float(x[1] - x[0])
    if direction == "past":
        chart, order = "retarded", np.arange(x.size)[::-1]
    elif direction == "future":
        chart, order = "advanced", np.arange(x.size)
    else:
        raise ValueError("direction must be 'past' or 'future'")
    th = theta.theta[order]
    fr = None if frozen is None else np.asarray(frozen)[order]
    cols = march_from_scri(th, h, R, theta.l, params.m, _b_columns(b, x, R, params.m, chart, order), fr)
    values = cols[np.argsort(order)]
    values[:, 0] = theta.theta
    field_ = ModeField(theta.l, x.copy(), R, values, chart, {"m": params.m, "R_max": params.R_max})
    flux = worldtube_flux(field_, params)
    field_.meta["worldtube_flux"] = flux
    if strict_worldtube and flux > worldtube_tol:
        raise WorldtubeContamination("field reached the worldtube at t >= 0", flux=flux, tol=worldtube_tol)
    return field_


def worldtube_flux(field_: ModeField, params: ChartParams) -> float:
    """Largest ``|d_R psi|`` on the wall over lattice times with ``t >= 0``."""
    rs_w = params.rstar_wall
    t = field_.x + rs_w if field_.chart == "retarded" else field_.x - rs_w
    mask = t >= 0
    if not np.any(mask):
        return 0.0
    v = field_.values
    dpsi = (3.0 * v[:, -1] - 4.0 * v[:, -2] + v[:, -3]) / (2.0 * field_.dR)
    return float(np.max(np.abs(dpsi[mask])))


# ---------------------------------------------------------------------------
# Global Picard iteration
# ---------------------------------------------------------------------------

@dataclass
class PicardReport:
    """Per-iteration update norms and contraction ratios."""

    deltas: list
    ratios: list
    converged: bool
    iterations: int

    @property
    def final_ratio(self) -> float:
        return self.ratios[-1] if self.ratios else 0.0

    @property
    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else 0.0

    def to_dict(self) -> dict:
        return {"deltas": self.deltas, "ratios": self.ratios, "converged": self.converged, "iterations": self.iterations}


def picard_solve(theta: ScriProfile, b: CoeffB, params: ChartParams, max_iter: int = 60,
                 tol: float = 1e-12, NR: int = 257, direction: str = "past"):
    """
    Global Picard iteration with a frozen cubic source.

    ``u_0`` solves the linear problem; ``u_{n+1}`` solves the linear problem
    with source ``-b u_n^3``.  Update sizes are measured in the sup over null
    slices of the discrete slice H^1 norm.

    Returns
    -------
    (ModeField, PicardReport)

    Raises
    ------
    NoContraction
        If the ratio of successive updates exceeds 1 on five consecutive steps.
    """
    current = solve_goursat(theta, direction, zero_b(), params, NR)
    if b.is_zero:
        return current, PicardReport([0.0], [], True, 1)
    _check_nonlinear_mode(theta.l, b)
    deltas, ratios = [], []
    above = 0
    dR = current.dR
    for it in range(max_iter):
        nxt = solve_goursat(theta, direction, b, params, NR, frozen=current.values)
        d = _slice_norm(nxt.values - current.values, dR, theta.l)
        deltas.append(d)
        if len(deltas) > 1 and deltas[-2] > 0:
            ratios.append(d / deltas[-2])
            above = above + 1 if ratios[-1] > 1.0 else 0
            if above >= 5:
                raise NoContraction("Picard updates stopped contracting", ratios=ratios, deltas=deltas)
        current = nxt
        if d <= tol:
            return current, PicardReport(deltas, ratios, True, it + 1)
    return current, PicardReport(deltas, ratios, False, max_iter)


# ---------------------------------------------------------------------------
# Scalar fixed-point analysis
# ---------------------------------------------------------------------------

@dataclass
class FixedPointAnalysis:
    """Roots of ``X^3 - X/alpha + beta`` and the small-data verdict."""

    alpha: float
    beta: float
    small_data: bool
    lambda0: float = float("nan")
    lambda1: float = float("nan")
    lambda2: float = float("nan")
    complex_roots: bool = False


def fixed_point_analysis(alpha: float, beta: float) -> FixedPointAnalysis:
    """
    Fixed points of ``x -> alpha (x^3 + beta)`` by the trigonometric Cardano form.

    Parameters
    ----------
    alpha : float
        Positive.
    beta : float
        Non-negative.

    Returns
    -------
    FixedPointAnalysis
        When ``beta^2 < 4/(27 alpha^3)`` the three real roots satisfy
        ``lambda1 < 0 <= lambda2 < lambda0``; otherwise ``complex_roots`` is set.
    """
    if alpha <= 0 or beta < 0:
        raise ValueError("need alpha > 0 and beta >= 0")
    small = beta * beta < 4.0 / (27.0 * alpha ** 3)
    if not small:
        return FixedPointAnalysis(alpha, beta, False, complex_roots=True)
    phi = math.acos(-math.sqrt(27.0 * beta * beta * alpha ** 3 / 4.0)) / 3.0
    amp = math.sqrt(4.0 / (3.0 * alpha))
    l0 = amp * math.cos(phi)
    l1 = amp * math.cos(phi + 2.0 * math.pi / 3.0)
    l2 = amp * math.cos(phi + 4.0 * math.pi / 3.0)
    if not (l1 < 0 <= l2 + 1e-14 * amp and l2 < l0):
        raise AssertionError("root ordering violated")
    # the small root is non-negative for beta >= 0; drop round-off below zero
    l2 = max(l2, 0.0)
    return FixedPointAnalysis(alpha, beta, True, l0, l1, l2)


def picard_sequence(alpha: float, beta: float, n: int = 200) -> np.ndarray:
    """The scalar bound sequence ``c_0 = alpha beta``, ``c_{k+1} = alpha (c_k^3 + beta)``."""
    c = np.empty(n + 1)
    c[0] = alpha * beta
    for k in range(n):
        if c[k] > 1e100:
            c[k + 1:] = np.inf
            break
        c[k + 1] = alpha * (c[k] ** 3 + beta)
        if not math.isfinite(c[k + 1]):
            c[k + 1:] = np.inf
            break
    return c
