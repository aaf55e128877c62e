"""
Leapfrog solver in the static (t, r*) chart and the extraction bridge to the null lattice.

For one mode of the rescaled field ``psi = r phi`` the equation is

    psi_tt - psi_{r*r*} + F (l(l+1)/r^2 + 2m/r^3) psi + F R^2 b psi^3 = 0,

with ``F = 1 - 2m/r``.  The left edge of the lattice is the worldtube wall
(``psi = 0``); the right edge is a Dirichlet edge that data must never reach.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .chart import ChartParams, r_of_rstar, rstar_of_r
from .coeff import CoeffB, zero_b
from .errors import BoundaryContamination, CFLViolation, ConeOutsideDomain, NonFiniteField
from .nullgrid import lagrange_weights

EDGE_CELLS = 5
EDGE_TOL = 1e-13


@dataclass
class CauchyState:
    """
    Field and time derivative on a uniform r*-lattice.

    ``rstar[0]`` is the worldtube.  ``psi_prev`` holds the previous leapfrog
    level when the state came out of an evolution; it is dropped whenever the
    state is rebuilt, which forces a Taylor start.
    """

    l: int
    rstar: np.ndarray
    psi: np.ndarray
    pi: np.ndarray
    t: float
    dt: float
    m: float = 0.0
    psi_prev: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def dr(self) -> float:
        return float(self.rstar[1] - self.rstar[0])

    def __post_init__(self):
        self.rstar = np.asarray(self.rstar, dtype=float)
        self.psi = np.asarray(self.psi, dtype=float)
        self.pi = np.asarray(self.pi, dtype=float)
        if self.dt > 0.5 * self.dr * (1 + 1e-12):
            raise CFLViolation("need dt <= 0.5 dr*", dt=self.dt, dr=self.dr)

    def time_reversed(self) -> "CauchyState":
        """Same field, opposite time derivative."""
        return CauchyState(self.l, self.rstar.copy(), self.psi.copy(), -self.pi, self.t, self.dt, self.m)


def make_lattice(rstar_wall: float, rstar_max: float, dr: float) -> np.ndarray:
    """Uniform lattice starting exactly at the wall with spacing ``dr``."""
    n = int(np.floor((rstar_max - rstar_wall) / dr + 1e-9)) + 1
    return rstar_wall + dr * np.arange(n)


def potential(rstar: np.ndarray, l: int, m: float):
    """Returns ``(V, F R^2)`` on the lattice."""
    r = np.asarray(r_of_rstar(rstar, m))
    F = 1.0 - 2.0 * m / r
    V = F * (l * (l + 1) / r ** 2 + 2.0 * m / r ** 3)
    return V, F / r ** 2


class WorldtubeRecorder:
    """Store ``psi`` at a few lattice indices after every step."""

    def __init__(self, indices):
        self.indices = np.asarray(indices, dtype=int)
        self.t: list = []
        self.rows: list = []

    def __call__(self, t, psi):
        self.t.append(t)
        self.rows.append(psi[self.indices].copy())

    def array(self):
        return np.asarray(self.t), np.asarray(self.rows)


class FullHistory:
    """Store the whole field after every step."""

    def __init__(self, rstar):
        self.rstar = np.asarray(rstar, dtype=float)
        self.t: list = []
        self.rows: list = []

    def __call__(self, t, psi):
        self.t.append(t)
        self.rows.append(psi.copy())

    def array(self):
        return np.asarray(self.t), np.asarray(self.rows)


def evolve_cauchy(state: CauchyState, b: Optional[CoeffB], params: ChartParams, t_end: float,
                  recorder: Optional[Callable] = None, monitor_edge: bool = True) -> CauchyState:
    """
    Advance by leapfrog to ``t_end``.

    Parameters
    ----------
    state : CauchyState
    b : CoeffB or None
        Cubic coefficient as a function of the chart point ``(u, R)``.
    params : ChartParams
        Supplies ``m``; ``state.m`` must agree.
    t_end : float
        Final time; the step is shrunk slightly so that it is hit exactly.
    recorder : callable, optional
        Called as ``recorder(t, psi)`` on the initial level and after every step.

    Returns
    -------
    CauchyState
        With ``pi`` from a centred difference around ``t_end``.

    Raises
    ------
    CFLViolation, BoundaryContamination
    """
    b = zero_b() if b is None else b
    if state.m != params.m:
        raise ValueError("state and params disagree on the mass")
    if state.l > 0 and not b.is_zero:
        raise ValueError("nonlinear runs are restricted to l = 0")
    dr = state.dr
    if state.dt > 0.5 * dr * (1 + 1e-12):
        raise CFLViolation("need dt <= 0.5 dr*", dt=state.dt, dr=dr)
    span = t_end - state.t
    if span < 0:
        raise ValueError("t_end precedes the state time")
    nsteps = int(np.ceil(span / state.dt - 1e-9))
    if nsteps == 0:
        return replace(state)
    dt = span / nsteps
    V, FR2 = potential(state.rstar, state.l, params.m)
    R = 1.0 / np.asarray(r_of_rstar(state.rstar, params.m))
    nonlinear = not b.is_zero

    b_static = FR2 * b(0.0, R) if (nonlinear and b.static) else None

    def accel(psi, t):
        a = np.zeros_like(psi)
        a[1:-1] = (psi[2:] - 2.0 * psi[1:-1] + psi[:-2]) / dr ** 2
        a -= V * psi
        if b_static is not None:
            a -= b_static * psi ** 3
        elif nonlinear:
            a -= FR2 * b(t - state.rstar, R) * psi ** 3
        a[0] = a[-1] = 0.0
        return a

    def check(psi, t):
        if not np.all(np.isfinite(psi)):
            raise NonFiniteField("non-finite Cauchy field", t=t)
        if monitor_edge:
            edge = float(np.max(np.abs(psi[-EDGE_CELLS:])))
            if edge > EDGE_TOL:
                raise BoundaryContamination("field reached the outer edge", t=t, amplitude=edge)

    psi0 = state.psi.copy()
    psi0[0] = psi0[-1] = 0.0
    t = state.t
    check(psi0, t)
    if recorder is not None:
        recorder(t, psi0)
    if state.psi_prev is not None and abs(state.dt - dt) < 1e-15 * max(1.0, dt):
        prev = state.psi_prev
    else:
        prev = None
    if prev is None:
        cur = psi0 + dt * state.pi + 0.5 * dt * dt * accel(psi0, t)
        cur[0] = cur[-1] = 0.0
        prev = psi0
    else:
        cur = 2.0 * psi0 - prev + dt * dt * accel(psi0, t)
        cur[0] = cur[-1] = 0.0
        prev = psi0
    t += dt
    check(cur, t)
    if recorder is not None:
        recorder(t, cur)
    for n in range(1, nsteps):
        nxt = 2.0 * cur - prev + dt * dt * accel(cur, t)
        nxt[0] = nxt[-1] = 0.0
        prev, cur = cur, nxt
        t = state.t + (n + 1) * dt
        check(cur, t)
        if recorder is not None:
            recorder(t, cur)
    ahead = 2.0 * cur - prev + dt * dt * accel(cur, t)
    ahead[0] = ahead[-1] = 0.0
    pi = (ahead - prev) / (2.0 * dt)
    return CauchyState(state.l, state.rstar.copy(), cur, pi, t, dt, params.m, psi_prev=prev)


def discrete_energy(state: CauchyState) -> float:
    """``sum (pi^2 + (d psi)^2 + V psi^2) dr*`` with one-sided differences on cell faces."""
    V, _ = potential(state.rstar, state.l, state.m)
    dr = state.dr
    grad = np.diff(state.psi) / dr
    return float(np.sum(state.pi ** 2 + V * state.psi ** 2) * dr + np.sum(grad ** 2) * dr)


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------

def _time_interp(times, values, t_query):
    """Cubic Lagrange interpolation in time on a uniform time lattice (rows of ``values``)."""
    times = np.asarray(times)
    dt = times[1] - times[0]
    pos = (np.asarray(t_query) - times[0]) / dt
    n = times.size
    i = np.clip(np.floor(pos).astype(int), 1, n - 3)
    w = lagrange_weights(pos - i)
    idx = i[..., None] + np.arange(-1, 3)
    return w, idx


def worldtube_series(recorder: WorldtubeRecorder, dr: float):
    """
    Outgoing-null derivative ``(psi_t - psi_r*)/2`` at the centre index of a 5-point recorder.

    Returns
    -------
    (t, psi_E, H_E) : tuple of ndarray
        Time derivatives use fourth-order centred differences in the interior
        of the record and second-order one-sided ones at its ends.
    """
    t, rows = recorder.array()
    psi = rows[:, 2]
    d_r = (rows[:, 0] - 8.0 * rows[:, 1] + 8.0 * rows[:, 3] - rows[:, 4]) / (12.0 * dr)
    dt = t[1] - t[0]
    d_t = np.gradient(psi, dt, edge_order=2)
    if psi.size >= 5:
        d_t[2:-2] = (psi[:-4] - 8.0 * psi[1:-3] + 8.0 * psi[3:-1] - psi[4:]) / (12.0 * dt)
    return t, psi, 0.5 * (d_t - d_r)


def sample_series(t, values, t_query):
    """Cubic Lagrange interpolation of a uniformly sampled series."""
    t = np.asarray(t)
    tq = np.asarray(t_query, dtype=float)
    if tq.min() < t[0] - 1e-9 * (1 + abs(t[0])) or tq.max() > t[-1] + 1e-9 * (1 + abs(t[-1])):
        raise ConeOutsideDomain("query time outside the recorded history", t_min=float(t[0]), t_max=float(t[-1]))
    w, idx = _time_interp(t, values, tq)
    return np.sum(w * np.asarray(values)[idx], axis=-1)


def extract_null_cone(history: FullHistory, u_c: float, R, m: float, outside: str = "raise"):
    """
    Field and transverse derivative on the outgoing cone ``t - r* = u_c``.

    Parameters
    ----------
    history : FullHistory
    u_c : float
        Retarded time of the cone.
    R : ndarray
        Target lattice of inverse radii; ``R = 0`` lies outside any finite history.
    m : float
    outside : {"raise", "zero"}
        Behaviour for lattice points whose cone point is not in the computed
        trapezoid.  ``"zero"`` is only legitimate when causality guarantees
        vanishing data there.

    Returns
    -------
    (psi, dpsi_R) : tuple of ndarray
        On the target lattice; ``dpsi_R`` is the derivative at fixed ``u``.
    """
    t, rows = history.array()
    rs = history.rstar
    dr = rs[1] - rs[0]
    dt = t[1] - t[0]
    # derivatives on the full history
    d_r = np.zeros_like(rows)
    d_r[:, 2:-2] = (rows[:, :-4] - 8.0 * rows[:, 1:-3] + 8.0 * rows[:, 3:-1] - rows[:, 4:]) / (12.0 * dr)
    d_r[:, 1] = (rows[:, 2] - rows[:, 0]) / (2 * dr)
    d_r[:, -2] = (rows[:, -1] - rows[:, -3]) / (2 * dr)
    d_t = np.gradient(rows, dt, axis=0, edge_order=2)
    if rows.shape[0] >= 5:
        d_t[2:-2] = (rows[:-4] - 8.0 * rows[1:-3] + 8.0 * rows[3:-1] - rows[4:]) / (12.0 * dt)
    tc = u_c + rs
    inside = (tc >= t[0] - 1e-12) & (tc <= t[-1] + 1e-12)
    cone_psi = np.zeros(rs.size)
    cone_dn = np.zeros(rs.size)
    if np.any(inside):
        w, idx = _time_interp(t, rows, tc[inside])
        cols = np.nonzero(inside)[0]
        cone_psi[inside] = np.sum(w * rows[idx, cols[:, None]], axis=-1)
        cone_dn[inside] = np.sum(w * (d_t + d_r)[idx, cols[:, None]], axis=-1)
    R = np.asarray(R, dtype=float)
    out_psi = np.zeros(R.size)
    out_dR = np.zeros(R.size)
    pos = R > 0
    target = np.full(R.size, np.inf)
    if np.any(pos):
        target[pos] = rstar_of_r(1.0 / R[pos], m)
    lo = rs[inside].min() if np.any(inside) else np.inf
    hi = rs[inside].max() if np.any(inside) else -np.inf
    ok = (target >= lo) & (target <= hi)
    if not np.all(ok) and outside == "raise":
        raise ConeOutsideDomain("cone leaves the computed trapezoid", r_lo=float(lo), r_hi=float(hi))
    if np.any(ok):
        pos_r = (target[ok] - rs[0]) / dr
        i = np.clip(np.floor(pos_r).astype(int), 1, rs.size - 3)
        w = lagrange_weights(pos_r - i)
        idx = i[:, None] + np.arange(-1, 3)
        out_psi[ok] = np.sum(w * cone_psi[idx], axis=-1)
        dn = np.sum(w * cone_dn[idx], axis=-1)
        Rk = R[ok]
        out_dR[ok] = -dn / (Rk * Rk * (1.0 - 2.0 * m * Rk))
    return out_psi, out_dR
