"""
The cubic coefficient ``b`` and the conformal rescaling of Cauchy data.

A coefficient is a plain callable ``b(u, R)`` wrapped in :class:`CoeffB`.
:func:`validate_b` measures, on nested grids, how well it satisfies the four
standing hypotheses: positivity, vanishing at null infinity, the Morawetz
derivative bound ``|T b| <= c b`` and cubic decay along a foliation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .chart import ChartParams, leaf_R, morawetz_vector

UNBOUNDED = "unbounded on this grid"


@dataclass(frozen=True)
class CoeffB:
    """
    Cubic coefficient ``b``.

    Parameters
    ----------
    sampler : callable
        ``sampler(u, R)`` returning values broadcast over the inputs.
    description : str
    decay_exponent_hint : float, optional
        ``p`` for families behaving like ``R**p`` near null infinity.
    is_zero : bool
    static : bool
        True when ``b`` depends on ``R`` only.  Solvers then sample it once,
        and the time reflection used for past null infinity is an exact
        symmetry of the equation.
    """

    sampler: Callable
    description: str = ""
    decay_exponent_hint: Optional[float] = None
    is_zero: bool = False
    static: bool = False

    def __call__(self, u, R):
        u = np.asarray(u, dtype=float)
        R = np.asarray(R, dtype=float)
        return np.broadcast_to(np.asarray(self.sampler(u, R), dtype=float), np.broadcast(u, R).shape)


def zero_b() -> CoeffB:
    """The linear case."""
    return CoeffB(lambda u, R: np.zeros(np.broadcast(u, R).shape), "zero", None, is_zero=True, static=True)


def constant_b(c: float) -> CoeffB:
    """Constant coefficient; does not vanish at null infinity."""
    return CoeffB(lambda u, R: np.full(np.broadcast(u, R).shape, float(c)), f"constant {c}", static=True)


def power_b(c: float, p: float) -> CoeffB:
    """``b = c R**p``."""
    return CoeffB(lambda u, R: c * np.power(R, p) + 0.0 * u, f"{c} R^{p}", p, static=True)


def smooth_step(x):
    """C-infinity step: 0 for ``x <= 0``, 1 for ``x >= 1``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    out[x >= 1] = 1.0
    mid = (x > 0) & (x < 1)
    if np.any(mid):
        xm = x[mid]
        a = np.exp(-1.0 / xm)
        b = np.exp(-1.0 / (1.0 - xm))
        out[mid] = a / (a + b)
    return out


def smooth_step_derivative(x):
    """Derivative of :func:`smooth_step`."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    mid = (x > 0) & (x < 1)
    if np.any(mid):
        xm = x[mid]
        a = np.exp(-1.0 / xm)
        b = np.exp(-1.0 / (1.0 - xm))
        out[mid] = a * b * (1.0 / xm ** 2 + 1.0 / (1.0 - xm) ** 2) / (a + b) ** 2
    return out


def cutoff_b(c: float, R1: float, R2: float) -> CoeffB:
    """
    ``b = c chi(R)`` with a smooth step ``chi`` rising from 0 at ``R1`` to 1 at ``R2``.

    The support stays away from null infinity, so positivity, the limit at
    null infinity and the cubic decay hold with finite constants; the
    Morawetz derivative ratio blows up at the support edge.
    """
    if not 0 < R1 < R2:
        raise ValueError("need 0 < R1 < R2")
    return CoeffB(lambda u, R: c * smooth_step((R - R1) / (R2 - R1)) + 0.0 * u, f"{c} chi(R; {R1}, {R2})", static=True)


def b_from_config(name: str, **kw) -> CoeffB:
    """Build a family by name: ``zero``, ``constant``, ``power`` or ``cutoff``."""
    name = name.lower()
    if name == "zero":
        return zero_b()
    if name == "constant":
        return constant_b(float(kw.get("c", 1.0)))
    if name == "power":
        return power_b(float(kw.get("c", 1.0)), float(kw.get("p", 3.0)))
    if name == "cutoff":
        return cutoff_b(float(kw.get("c", 1.0)), float(kw["R1"]), float(kw["R2"]))
    raise ValueError(f"unknown b family {name!r}")


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass
class BValidationReport:
    """
    Empirical constants for the four hypotheses on ``b``.

    Each constant is a float or the string :data:`UNBOUNDED`.  ``history``
    lists the raw values per refinement level.
    """

    sup_positivity_violation: object
    scri_limit_residual: object
    a3_best_constant: object
    a4_best_constant: object
    history: dict = field(default_factory=dict)

    @property
    def all_finite(self) -> bool:
        return all(
            isinstance(v, float) and math.isfinite(v)
            for v in (self.sup_positivity_violation, self.scri_limit_residual, self.a3_best_constant, self.a4_best_constant)
        )

    def to_dict(self) -> dict:
        return {
            "sup_positivity_violation": self.sup_positivity_violation,
            "scri_limit_residual": self.scri_limit_residual,
            "a3_best_constant": self.a3_best_constant,
            "a4_best_constant": self.a4_best_constant,
            "history": self.history,
        }


def _nested_grid(params: ChartParams, nu: int, nR: int, level: int):
    k = 2 ** level
    u = np.linspace(params.u_min, params.u_max, (nu - 1) * k + 1)
    R_uni = np.linspace(0.0, params.R_max, (nR - 1) * k + 1)
    # geometric samples accumulate towards R = 0 with every level
    R_geo = params.R_max * np.logspace(-3 - 3 * level, 0, nR * k)
    R = np.unique(np.concatenate([R_uni, R_geo]))
    return u, R


def _a3_ratio(b: CoeffB, U, RR):
    du = 1e-4 * (1.0 + np.abs(U))
    dR = 1e-3 * RR
    Tu, TR = morawetz_vector(U, RR)
    bu = (b(U + du, RR) - b(U - du, RR)) / (2 * du)
    bR = (b(U, RR + dR) - b(U, RR - dR)) / (2 * dR)
    Tb = np.abs(Tu * bu + TR * bR)
    bv = b(U, RR)
    scale = max(float(np.max(np.abs(bv))), 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bv > 0, Tb / np.where(bv > 0, bv, 1.0), np.where(Tb > 1e-10 * scale, np.inf, 0.0))
    return float(np.max(ratio)) if ratio.size else 0.0


def _a4_ratio(b: CoeffB, u, leaves, m: float):
    worst = 0.0
    for s in leaves:
        R = leaf_R(u, s, m)
        val = float(np.max(np.abs(b(u, R)))) / s ** 3
        worst = max(worst, val)
    return worst


def validate_b(b: CoeffB, params: ChartParams, nu: int = 65, nR: int = 65, levels: int = 3,
               leaves: Optional[np.ndarray] = None) -> BValidationReport:
    """
    Measure the hypotheses on nested grids.

    Parameters
    ----------
    b : CoeffB
    params : ChartParams
    nu, nR : int
        Coarsest grid size; each level doubles both and pushes geometric
        R-samples a further three decades towards ``R = 0``.
    levels : int
        Number of refinement levels.
    leaves : ndarray, optional
        Leaf parameters ``r`` in (0, 1] of the decay foliation, taken as the
        ``H_s`` leaves with ``s = r``.  Defaults to a geometric sweep.

    Returns
    -------
    BValidationReport
        A constant is reported as unbounded when it grows across every level
        and exceeds ``1e6`` at the finest one.
    """
    if b.is_zero:
        return BValidationReport(0.0, 0.0, 0.0, 0.0, {})
    hist = {"positivity": [], "scri": [], "a3": [], "a4": []}
    for level in range(levels):
        u, R = _nested_grid(params, nu, nR, level)
        U, RR = np.meshgrid(u, R, indexing="ij")
        vals = b(U, RR)
        hist["positivity"].append(float(max(0.0, -np.min(vals))))
        hist["scri"].append(float(np.max(np.abs(b(u, 0.0)))))
        pos = RR > 0
        hist["a3"].append(_a3_ratio(b, U[pos], RR[pos]))
        # nested leaf sets: eight leaves per decade, one more decade per level
        lv = leaves if leaves is not None else 10.0 ** (-np.arange(0, 8 * (2 + level) + 1) / 8.0)
        u_neg = u[u < 0]
        hist["a4"].append(_a4_ratio(b, u_neg, lv, params.m) if u_neg.size else 0.0)

    def verdict(seq):
        if not np.all(np.isfinite(seq)):
            return UNBOUNDED
        grows = all(b_ >= a_ for a_, b_ in zip(seq, seq[1:])) and seq[-1] > seq[0]
        if grows and seq[-1] > 1e6:
            return UNBOUNDED
        return float(seq[-1])

    return BValidationReport(
        sup_positivity_violation=verdict(hist["positivity"]),
        scri_limit_residual=verdict(hist["scri"]),
        a3_best_constant=verdict(hist["a3"]),
        a4_best_constant=verdict(hist["a4"]),
        history=hist,
    )


# ---------------------------------------------------------------------------
# Conformal rescaling of Cauchy data
# ---------------------------------------------------------------------------

def physical_to_conformal_data(theta, xi, Omega, dOmega_T):
    """
    Rescale physical Cauchy data to the conformal problem.

    Parameters
    ----------
    theta, xi : ndarray
        Physical field and its Morawetz derivative on the slice.
    Omega : ndarray
        Conformal factor samples.
    dOmega_T : ndarray
        Morawetz derivative of ``Omega``.

    Returns
    -------
    (psi0, psi1) : tuple of ndarray
        ``(theta/Omega, (xi - dOmega_T theta / Omega) / Omega)``; zero where ``Omega = 0``.
    """
    theta, xi, Om, dOm = (np.asarray(a, dtype=float) for a in (theta, xi, Omega, dOmega_T))
    ok = Om != 0
    safe = np.where(ok, Om, 1.0)
    psi0 = np.where(ok, theta / safe, 0.0)
    psi1 = np.where(ok, (xi - dOm * theta / safe) / safe, 0.0)
    return psi0, psi1


def conformal_to_physical_data(psi0, psi1, Omega, dOmega_T):
    """Inverse of :func:`physical_to_conformal_data`."""
    psi0, psi1, Om, dOm = (np.asarray(a, dtype=float) for a in (psi0, psi1, Omega, dOmega_T))
    theta = Om * psi0
    xi = Om * psi1 + dOm * psi0
    return theta, xi
