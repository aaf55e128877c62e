"""
Schwarzschild exterior in the compactified characteristic chart.

Coordinates are the retarded time ``u = t - r*`` and the inverse radius
``R = 1/r``; future null infinity is the line ``R = 0``.  The rescaled
metric is

    g = R^2 (1 - 2 m R) du^2 - 2 du dR - dω^2 ,

so ``u = const`` are outgoing null cones and ingoing rays obey
``dR/du = A/2`` with ``A = R^2 (1 - 2 m R)``.

All functions are vectorised over ``u`` and ``R`` and have no state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

ArrayLike = "float | np.ndarray"


@dataclass(frozen=True)
class ChartParams:
    """
    Geometry and domain bounds.

    Parameters
    ----------
    m : float
        Mass.  ``m = 0`` gives the compactified Minkowski chart.
    u_min, u_max : float
        Retarded-time bounds of the characteristic rectangle.
    R_max : float
        Inverse radius of the inner worldtube, ``0 < 2 m R_max < 1``.
    eps : float
        Tolerance of the coordinate decay inequalities, in (0, 1).
    u0 : float
        Negative cutoff retarded time that bounds the region near spatial infinity.
    """

    m: float = 1.0
    u_min: float = -160.0
    u_max: float = -60.0
    R_max: float = 0.0125
    eps: float = 0.1
    u0: float = -100.0

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("mass must be non-negative")
        if not self.R_max > 0:
            raise ValueError("R_max must be positive")
        if 2.0 * self.m * self.R_max >= 1.0:
            raise ValueError("worldtube must lie outside r = 2m (need 2 m R_max < 1)")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if not self.u_min < self.u_max:
            raise ValueError("u_min must be smaller than u_max")
        if not self.u0 < 0:
            raise ValueError("u0 must be negative")

    @property
    def r_wall(self) -> float:
        return 1.0 / self.R_max

    @property
    def rstar_wall(self) -> float:
        return float(rstar_of_r(self.r_wall, self.m))


@dataclass(frozen=True)
class ChartPoint:
    """A point in the (u, R) chart, optionally carrying its (t, r*) pair."""

    u: float
    R: float
    t: Optional[float] = None
    rstar: Optional[float] = None

    @classmethod
    def from_cauchy(cls, t: float, rstar: float, m: float) -> "ChartPoint":
        r = float(r_of_rstar(rstar, m))
        return cls(u=t - rstar, R=1.0 / r, t=t, rstar=rstar)


# ---------------------------------------------------------------------------
# Tortoise coordinate
# ---------------------------------------------------------------------------

def rstar_of_r(r, m: float):
    """
    Tortoise coordinate ``r* = r + 2 m log(r - 2 m)``.

    Parameters
    ----------
    r : float or ndarray
        Areal radius, strictly larger than ``2 m``.
    m : float
        Mass.

    Returns
    -------
    float or ndarray

    Raises
    ------
    ValueError
        If any ``r <= 2 m``.
    """
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 2.0 * m):
        raise ValueError("rstar_of_r requires r > 2m")
    if m == 0:
        out = r_arr.copy()
    else:
        out = r_arr + 2.0 * m * np.log(r_arr - 2.0 * m)
    return out if out.ndim else float(out)


def r_of_rstar(rstar, m: float, rtol: float = 1e-12):
    """
    Invert the tortoise map by bracketed bisection with a Newton polish.

    The unknown is ``y = log(r - 2m)``, in which the residual
    ``2m + e^y + 2m y - r*`` is increasing and convex.

    Parameters
    ----------
    rstar : float or ndarray
    m : float
    rtol : float
        Relative tolerance on ``r``.
    """
    x = np.asarray(rstar, dtype=float)
    if m == 0:
        if np.any(x <= 0):
            raise ValueError("r* must be positive when m = 0")
        return x.copy() if x.ndim else float(x)
    two_m = 2.0 * m

    def resid(y):
        return two_m + np.exp(y) + two_m * y - x

    y_hi = np.minimum((x - two_m) / two_m, np.log(np.abs(x) + 1.0))
    y_lo = np.minimum((x - two_m - 1.0) / two_m, 0.0)
    # y_lo can equal y_hi only at an exact root; widen by one ulp-scale step
    y_lo = np.minimum(y_lo, y_hi - 1e-300)
    for _ in range(200):
        mid = 0.5 * (y_lo + y_hi)
        pos = resid(mid) > 0
        y_hi = np.where(pos, mid, y_hi)
        y_lo = np.where(pos, y_lo, mid)
        if np.all(y_hi - y_lo <= 1e-3 * (1.0 + np.abs(y_hi))):
            break
    y = 0.5 * (y_lo + y_hi)
    for _ in range(50):
        step = resid(y) / (np.exp(y) + two_m)
        y = y - step
        r = two_m + np.exp(y)
        if np.all(np.abs(step) * np.exp(y) <= rtol * r):
            break
    r = two_m + np.exp(y)
    return r if r.ndim else float(r)


# ---------------------------------------------------------------------------
# Metric
# ---------------------------------------------------------------------------

def lapse_factor(R, m: float):
    """``A = R^2 (1 - 2 m R)``, the ``du^2`` coefficient of the metric."""
    R = np.asarray(R, dtype=float)
    return R * R * (1.0 - 2.0 * m * R)


def metric_components(R, params: ChartParams):
    """
    Covariant components of the rescaled metric on the (u, R) block.

    Returns
    -------
    (g_uu, g_uR, angular_scale)
        ``g_RR`` vanishes; the angular block is ``-angular_scale * dω^2``.
    """
    R = np.asarray(R, dtype=float)
    if np.any(R < 0) or np.any(R > params.R_max * (1 + 1e-12)):
        raise ValueError("R outside [0, R_max]")
    guu = lapse_factor(R, params.m)
    return guu, -np.ones_like(guu), np.ones_like(guu)


def inverse_metric_components(R, params: ChartParams):
    """Contravariant components ``(g^uu, g^uR, g^RR) = (0, -1, -A)``."""
    R = np.asarray(R, dtype=float)
    A = lapse_factor(R, params.m)
    return np.zeros_like(A), -np.ones_like(A), -A


def curvature_term(R, params: ChartParams):
    """One sixth of the scalar curvature of the rescaled metric, ``2 m R``."""
    return 2.0 * params.m * np.asarray(R, dtype=float)


# ---------------------------------------------------------------------------
# Morawetz field
# ---------------------------------------------------------------------------

def morawetz_vector(u, R):
    """Components ``(T^u, T^R) = (u^2, -2(1 + uR))``."""
    u = np.asarray(u, dtype=float)
    R = np.asarray(R, dtype=float)
    return u * u, -2.0 * (1.0 + u * R)


def morawetz_norm_sq(u, R, params: ChartParams):
    """Squared norm ``u^2 (4(1 + uR) + u^2 R^2 (1 - 2mR))``."""
    u = np.asarray(u, dtype=float)
    R = np.asarray(R, dtype=float)
    return u * u * (4.0 * (1.0 + u * R) + u * u * lapse_factor(R, params.m))


def morawetz_null_roots(R, m: float):
    """
    Values of ``x = uR`` where the Morawetz field turns null.

    Returns
    -------
    (x_near, x_far) : tuple
        ``-2/(1 + sqrt(2mR))`` and ``-2/(1 - sqrt(2mR))``.
    """
    q = np.sqrt(2.0 * m * np.asarray(R, dtype=float))
    return -2.0 / (1.0 + q), -2.0 / (1.0 - q)


# ---------------------------------------------------------------------------
# Foliation by the hypersurfaces H_s = {|u| = s r*}
# ---------------------------------------------------------------------------

def s_of_point(u, R, m: float):
    """``s = |u| / r*``."""
    r = 1.0 / np.asarray(R, dtype=float)
    return np.abs(u) / rstar_of_r(r, m)


def tau_of_s(s):
    """``tau = 2 (1 - sqrt(s))`` on ``s`` in [0, 1]."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0) or np.any(s_arr > 1):
        raise ValueError("s must lie in [0, 1]")
    out = -2.0 * (np.sqrt(s_arr) - 1.0)
    return out if out.ndim else float(out)


def s_of_tau(tau):
    """Inverse of :func:`tau_of_s`."""
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr < 0) or np.any(tau_arr > 2):
        raise ValueError("tau must lie in [0, 2]")
    out = (1.0 - 0.5 * tau_arr) ** 2
    return out if out.ndim else float(out)


def identifying_field(u, R, params: ChartParams):
    """
    ``dR/dtau`` at fixed ``u``: the R-component of the field transporting H_s leaves.

    The magnitude is ``(r* R)^{3/2} (1 - 2mR) sqrt(R/|u|)``.  The sign is
    negative because tau grows towards null infinity (R decreasing), so the
    field satisfies ``d tau(V) = +1``.  Returns 0 on ``R = 0``.
    """
    u = np.asarray(u, dtype=float)
    R = np.asarray(R, dtype=float)
    out = np.zeros(np.broadcast(u, R).shape)
    Rb = np.broadcast_to(R, out.shape)
    ub = np.broadcast_to(u, out.shape)
    pos = Rb > 0
    if np.any(pos):
        Rp = Rb[pos]
        rs = rstar_of_r(1.0 / Rp, params.m)
        out[pos] = -((rs * Rp) ** 1.5) * (1.0 - 2.0 * params.m * Rp) * np.sqrt(Rp / np.abs(ub[pos]))
    return out if out.ndim else float(out)


def leaf_R(u, s, m: float):
    """Inverse radius on the leaf ``H_s`` at retarded time ``u`` (``r* = |u|/s``)."""
    u = np.asarray(u, dtype=float)
    s = np.asarray(s, dtype=float)
    out = np.zeros(np.broadcast(u, s).shape)
    sb = np.broadcast_to(s, out.shape)
    ub = np.broadcast_to(u, out.shape)
    pos = sb > 0
    if np.any(pos):
        out[pos] = 1.0 / np.asarray(r_of_rstar(np.abs(ub[pos]) / sb[pos], m))
    return out if out.ndim else float(out)


def sigma0_R(u, m: float):
    """Inverse radius of the initial slice ``t = 0`` (``r* = -u``)."""
    return leaf_R(u, 1.0, m)


# ---------------------------------------------------------------------------
# Audit of the coordinate decay inequalities
# ---------------------------------------------------------------------------

@dataclass
class ChartAudit:
    """Outcome of :func:`chart_audit`."""

    passed: bool
    n_samples: int
    ranges: dict = field(default_factory=dict)
    morawetz_floor: float = float("nan")
    morawetz_bound: float = float("nan")
    violations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "n_samples": self.n_samples,
            "ranges": self.ranges,
            "morawetz_floor": self.morawetz_floor,
            "morawetz_bound": self.morawetz_bound,
            "violations": self.violations,
        }


def chart_audit(params: ChartParams, nu: int = 200, nR: int = 200) -> ChartAudit:
    """
    Scan the region ``{u <= u0, t >= 0, 0 < R <= R_max}`` and test the decay inequalities.

    Lower bounds that degenerate to equalities when ``m = 0`` (``r = r*``) or on
    the slice ``t = 0`` (``s = 1``) are tested non-strictly.

    Parameters
    ----------
    params : ChartParams
    nu, nR : int
        Samples in ``u`` (from ``u_min`` to ``u0``) and in ``R``.

    Returns
    -------
    ChartAudit
        Never raises on failure; violated inequalities carry a witness point.
    """
    m, eps, u0 = params.m, params.eps, params.u0
    u_hi = min(u0, params.u_max)
    u = np.linspace(min(params.u_min, u_hi), u_hi, nu)
    R = np.linspace(0.0, params.R_max, nR + 1)[1:]
    # geometric refinement towards null infinity
    R = np.unique(np.concatenate([R, params.R_max * np.logspace(-6, 0, nR)]))
    U, RR = np.meshgrid(u, R, indexing="ij")
    r = 1.0 / RR
    rs = rstar_of_r(r, m)
    inside = (U + rs) >= 0.0
    U, RR, r, rs = U[inside], RR[inside], r[inside], rs[inside]
    audit = ChartAudit(passed=True, n_samples=int(U.size))
    if U.size == 0:
        audit.passed = False
        audit.violations.append({"inequality": "coverage", "witness": None})
        return audit
    s = np.abs(U) / rs
    checks = {
        "r <= r* < (1+eps) r": (rs / r, 1.0, 1.0 + eps, False),
        "1 <= R r* < 1+eps": (RR * rs, 1.0, 1.0 + eps, False),
        "0 < R|u| < 1+eps": (RR * np.abs(U), 0.0, 1.0 + eps, True),
        "1-eps < 1-2mR <= 1": (1.0 - 2.0 * m * RR, 1.0 - eps, 1.0, "upper"),
        "0 < s <= 1": (s, 0.0, 1.0, "s"),
    }
    tol = 1e-12
    for name, (val, lo, hi, mode) in checks.items():
        audit.ranges[name] = [float(val.min()), float(val.max())]
        if mode is False:
            bad = (val < lo - tol) | (val >= hi)
        elif mode is True:
            bad = (val <= lo) | (val >= hi)
        elif mode == "upper":
            bad = (val <= lo) | (val > hi + tol)
        else:
            bad = (val <= lo) | (val > hi + tol)
        if np.any(bad):
            k = int(np.argmax(bad))
            audit.passed = False
            audit.violations.append(
                {"inequality": name, "witness": {"u": float(U[k]), "R": float(RR[k]), "value": float(val[k])}}
            )
    norm = morawetz_norm_sq(U, RR, params)
    audit.morawetz_floor = float(norm.min())
    audit.morawetz_bound = 4.0 * u0 * u0 * eps
    if audit.morawetz_floor < audit.morawetz_bound:
        k = int(np.argmin(norm))
        audit.passed = False
        audit.violations.append(
            {"inequality": "Morawetz norm >= 4 u0^2 eps", "witness": {"u": float(U[k]), "R": float(RR[k]), "value": float(norm[k])}}
        )
    return audit
