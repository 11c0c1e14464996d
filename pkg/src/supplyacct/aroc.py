"""Accountability ROC curves: construction, AUC, Shapiro bounds and checks
of the four structural properties of a proper test's curve.

Curves are parameterized by the likelihood-ratio threshold applied to the
misinformation hypothesis, so the slope dP_A/dP_U at a point equals its
``tau``. Under the platoon labels this threshold is pi_1/pi_0, the
reciprocal of the reputation ratio fed to
:func:`~supplyacct.hypotest.accountability_gaussian`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import write_csv
from .errors import AccountabilityError, ImproperTestError
from .hypotest import TestOutcome, accountability_gaussian, q_function, q_inverse

TAU_MIN = 1e-6
TAU_MAX = 1e6
ANALYTIC_CONCAVITY_TOL = 1e-9
EMPIRICAL_CONCAVITY_TOL = 1e-3
SLOPE_REL_TOL = 0.05


@dataclass(frozen=True, eq=False)
class ArocCurve:
    tau: np.ndarray
    p_u: np.ndarray
    p_a: np.ndarray
    d: float | None = None

    def __post_init__(self):
        tau, p_u, p_a = (np.asarray(a, dtype=float) for a in (self.tau, self.p_u, self.p_a))
        if not (tau.shape == p_u.shape == p_a.shape) or tau.ndim != 1:
            raise AccountabilityError("tau, p_u and p_a must be 1-D arrays of equal length")
        if np.any(np.diff(p_u) < 0):
            raise AccountabilityError("curve points must be sorted by nondecreasing P_U")
        for arr in (p_u, p_a):
            if np.any((arr < 0) | (arr > 1)):
                raise AccountabilityError("curve coordinates must lie in [0,1]")
            arr.setflags(write=False)
        tau.setflags(write=False)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "p_u", p_u)
        object.__setattr__(self, "p_a", p_a)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.p_u.tolist(), self.p_a.tolist()))

    def __len__(self):
        return self.p_u.size


def aroc_curve_gaussian(d: float, grid_size: int = 201) -> ArocCurve:
    """Analytic AROC of the Gaussian mean-shift test with index ``d``.

    Thresholds are log-spaced over [1e-6, 1e6]; the endpoints (0,0) at
    tau = inf and (1,1) at tau = 0 are appended exactly.
    """
    if not d > 0:
        raise AccountabilityError(f"d must be positive, got {d}")
    if grid_size < 3:
        raise AccountabilityError("grid_size must be >= 3")
    taus = np.logspace(math.log10(TAU_MAX), math.log10(TAU_MIN), grid_size)
    p_u = np.empty(grid_size)
    p_a = np.empty(grid_size)
    for i, t in enumerate(taus):
        out = accountability_gaussian(d, 1.0 / t)
        p_u[i], p_a[i] = out.wronged, out.accountability
    # rounding can break monotonicity by an ulp at saturation
    p_u = np.maximum.accumulate(p_u)
    return ArocCurve(
        np.concatenate([[math.inf], taus, [0.0]]),
        np.concatenate([[0.0], p_u, [1.0]]),
        np.concatenate([[0.0], p_a, [1.0]]),
        d=d,
    )


def gaussian_p_u_from_p_a(d: float, p_a) -> np.ndarray:
    """Threshold-free curve relation P_U = Q(d - Q^{-1}(1 - P_A))."""
    return q_function(d - q_inverse(1.0 - np.asarray(p_a, dtype=float)))


def error_prob_equal_priors(outcome: TestOutcome) -> float:
    """P_e = P_U/2 + (1 - P_A)/2 for an outcome computed at tau = 1."""
    if not math.isclose(outcome.decision_threshold, 1.0, rel_tol=0, abs_tol=1e-12):
        raise AccountabilityError(
            f"P_e needs the equal-prior outcome (tau = 1), got tau = {outcome.decision_threshold}"
        )
    return outcome.wronged / 2 + (1.0 - outcome.accountability) / 2


def auc_numeric(curve: ArocCurve) -> float:
    """Trapezoidal area under P_A as a function of P_U."""
    if len(curve) < 3:
        raise AccountabilityError("AUC needs at least three curve points")
    if np.any(np.diff(curve.p_u) < 0):
        raise AccountabilityError("P_U must be nondecreasing along the curve")
    return float(np.trapezoid(curve.p_a, curve.p_u))


def auc_bounds(p_e: float) -> tuple[float, float]:
    """Shapiro bounds (1 - P_e, 1 - 2 P_e^2) on the AUC of a proper test."""
    if p_e < 0:
        raise AccountabilityError(f"P_e must be >= 0, got {p_e}")
    if p_e > 0.5:
        raise ImproperTestError(f"P_e = {p_e} > 0.5: the test is worse than chance")
    return 1.0 - p_e, 1.0 - 2.0 * p_e * p_e


def gaussian_auc_bounds(d: float) -> tuple[float, float]:
    q = float(q_function(d / 2))
    return 1.0 - q, 1.0 - 2.0 * q * q


@dataclass
class ArocPropertyReport:
    endpoints: bool
    slope: bool
    concave: bool
    proper: bool
    slope_checked: int = 0
    worst_slope_error: float = 0.0
    worst_concavity_gap: float = 0.0
    violations: list = field(default_factory=list)

    @property
    def all_pass(self) -> bool:
        return self.endpoints and self.slope and self.concave and self.proper


def validate_aroc_properties(
    curve: ArocCurve,
    tau_grid=None,
    concavity_tol: float = ANALYTIC_CONCAVITY_TOL,
    slope_rel_tol: float = SLOPE_REL_TOL,
) -> ArocPropertyReport:
    """Check endpoints, slope = tau, concavity and P_A >= P_U.

    Failures are recorded in the report, never raised. The slope is the
    centred chord slope at interior points whose chord is numerically
    resolvable; near P = 1 a difference below 1e-8 is pure rounding and
    the point is skipped.
    """
    tau = curve.tau if tau_grid is None else np.asarray(tau_grid, dtype=float)
    if tau.shape != curve.p_u.shape:
        raise AccountabilityError("tau grid must match the curve points")
    p_u, p_a = curve.p_u, curve.p_a
    violations = []

    pts = set(curve.points)
    endpoints = (0.0, 0.0) in pts and (1.0, 1.0) in pts
    if not endpoints:
        violations.append("endpoint (0,0) or (1,1) missing")

    worst_slope = 0.0
    checked = 0
    for i in range(1, len(curve) - 1):
        t = tau[i]
        neighbours = (tau[i - 1], t, tau[i + 1])
        if not all(math.isfinite(v) and v > 0 for v in neighbours):
            continue
        du = p_u[i + 1] - p_u[i - 1]
        da = p_a[i + 1] - p_a[i - 1]
        near_one = max(p_u[i + 1], p_a[i + 1]) > 0.5
        if du <= 0 or da <= 0 or (near_one and min(du, da) < 1e-8):
            continue
        checked += 1
        err = abs(da / du - t) / t
        worst_slope = max(worst_slope, err)
        if err > slope_rel_tol:
            violations.append(f"slope {da / du:.6g} vs tau {t:.6g} at point {i}")
    slope_ok = checked > 0 and worst_slope <= slope_rel_tol
    if checked == 0:
        violations.append("no resolvable interior point for the slope check")

    # concavity: every point lies on or above the chord of its neighbours
    worst_gap = 0.0
    for i in range(1, len(curve) - 1):
        x0, x1, x2 = p_u[i - 1], p_u[i], p_u[i + 1]
        if x2 - x0 <= 0:
            continue
        chord = p_a[i - 1] + (p_a[i + 1] - p_a[i - 1]) * (x1 - x0) / (x2 - x0)
        worst_gap = max(worst_gap, chord - p_a[i])
    concave = worst_gap <= concavity_tol
    if not concave:
        violations.append(f"concavity gap {worst_gap:.3e} exceeds {concavity_tol:.1e}")

    proper = bool(np.all(p_a >= p_u))
    if not proper:
        violations.append("P_A < P_U somewhere: improper ('bad') test, rebuild the investigation")

    return ArocPropertyReport(
        endpoints=endpoints,
        slope=slope_ok,
        concave=concave,
        proper=proper,
        slope_checked=checked,
        worst_slope_error=worst_slope,
        worst_concavity_gap=worst_gap,
        violations=violations,
    )


@dataclass(frozen=True)
class FloorClassification:
    unaccountable: bool
    nontransparent: bool


def accountability_floors(p_a: float, eta_floor: float, eps_floor: float) -> FloorClassification:
    """Flag P_A <= eta (unaccountable supplier) and P_A <= eps (nontransparent system)."""
    for name, v in (("p_a", p_a), ("eta_floor", eta_floor), ("eps_floor", eps_floor)):
        if not 0.0 <= v <= 1.0:
            raise AccountabilityError(f"{name} must lie in [0,1], got {v}")
    return FloorClassification(p_a <= eta_floor, p_a <= eps_floor)


def write_curve_csv(curve: ArocCurve, path):
    return write_csv(path, ("tau", "p_u", "p_a"), zip(curve.tau, curve.p_u, curve.p_a))
