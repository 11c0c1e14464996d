"""Economic layer: supplier penalty contracts, buyer-side cyber insurance
under risk aversion, and the investigation-versus-insurance trade-off.

Binary type and message spaces throughout; contract arrays are indexed
``[theta][m]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import write_csv
from .errors import AccountabilityError
from .hypotest import gaussian_miss_probability

REL_TOL = 1e-12


def _leq(a: float, b: float) -> bool:
    """a <= b up to a relative rounding tolerance."""
    return a <= b + REL_TOL * max(1.0, abs(a), abs(b))


# ---------------------------------------------------------------------------
# contracts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContractInstance:
    profit: tuple  # J_S[theta][m]
    penalty: tuple  # C_S[theta][m]
    purchase: tuple  # alpha(m)
    accountability: tuple  # P_A^m

    def __post_init__(self):
        profit = tuple(tuple(float(v) for v in row) for row in self.profit)
        penalty = tuple(tuple(float(v) for v in row) for row in self.penalty)
        purchase = tuple(float(v) for v in self.purchase)
        acc = tuple(float(v) for v in self.accountability)
        if any(len(r) != 2 for r in profit + penalty) or len(profit) != 2 or len(penalty) != 2:
            raise AccountabilityError("profits and penalties must be 2x2 arrays indexed [theta][m]")
        if len(purchase) != 2 or len(acc) != 2:
            raise AccountabilityError("purchase and accountability need one entry per message")
        if any(v < 0 for r in penalty for v in r):
            raise AccountabilityError("penalties must be nonnegative")
        if any(not 0 <= v <= 1 for v in purchase + acc):
            raise AccountabilityError("purchase and accountability probabilities must lie in [0,1]")
        for name, v in (("profit", profit), ("penalty", penalty), ("purchase", purchase), ("accountability", acc)):
            object.__setattr__(self, name, v)

    def with_penalties(self, penalty) -> "ContractInstance":
        return ContractInstance(self.profit, penalty, self.purchase, self.accountability)


def supplier_utility(c: ContractInstance, theta: int, m: int) -> float:
    """U_S(theta, m) = alpha(m) (J_S - C_S P_A^m)."""
    if theta not in (0, 1) or m not in (0, 1):
        raise AccountabilityError("theta and m must be 0 or 1")
    return c.purchase[m] * (c.profit[theta][m] - c.penalty[theta][m] * c.accountability[m])


@dataclass
class ContractReport:
    """Each constraint maps to (satisfied, slack); slack >= 0 means satisfied."""

    constraints: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return all(ok for ok, _ in self.constraints.values())

    @property
    def violated(self) -> list[str]:
        return [name for name, (ok, _) in self.constraints.items() if not ok]


def check_ic_ir(c: ContractInstance, strict_ir: bool = False) -> ContractReport:
    """Incentive compatibility, individual rationality and penalty ordering.

    IR is required for misreports (theta, m != theta); ``strict_ir`` also
    requires it for truthful reports.
    """
    rep = ContractReport()
    for theta in (0, 1):
        lie = 1 - theta
        truthful = supplier_utility(c, theta, theta)
        misreport = supplier_utility(c, theta, lie)
        rep.constraints[f"IC_theta{theta}"] = (_leq(misreport, truthful), truthful - misreport)
        rep.constraints[f"IR_{theta}{lie}"] = (_leq(0.0, misreport), misreport)
        if strict_ir:
            rep.constraints[f"IR_{theta}{theta}"] = (_leq(0.0, truthful), truthful)
        gap = c.penalty[theta][lie] - c.penalty[theta][theta]
        rep.constraints[f"order_{theta}"] = (gap > 0, gap)
    return rep


@dataclass(frozen=True, eq=False)
class PenaltyRegion:
    theta: int
    c_truth: np.ndarray  # grid of C_S[theta][theta]
    c_lie: np.ndarray  # grid of C_S[theta][1 - theta]
    feasible: np.ndarray  # bool, shape (len(c_truth), len(c_lie))

    @property
    def empty(self) -> bool:
        return not bool(self.feasible.any())

    def boundary(self) -> list[tuple[float, float | None, float | None]]:
        """(c_truth, smallest feasible c_lie, largest feasible c_lie) per column."""
        out = []
        for i, ct in enumerate(self.c_truth):
            idx = np.flatnonzero(self.feasible[i])
            if idx.size:
                out.append((float(ct), float(self.c_lie[idx[0]]), float(self.c_lie[idx[-1]])))
            else:
                out.append((float(ct), None, None))
        return out

    def rows(self):
        for i, ct in enumerate(self.c_truth):
            for j, cl in enumerate(self.c_lie):
                yield float(ct), float(cl), bool(self.feasible[i, j])


def feasible_penalty_region(
    c: ContractInstance,
    theta: int,
    truth_max: float,
    lie_max: float,
    resolution: int = 401,
    strict_ir: bool = False,
) -> PenaltyRegion:
    """Grid scan of (C_S^{theta,theta}, C_S^{theta,m!=theta}) pairs passing
    IC and IR for type ``theta`` and the penalty ordering.

    Penalties of the other type do not enter these constraints, so the
    contract's existing values for them are ignored.
    """
    if theta not in (0, 1):
        raise AccountabilityError("theta must be 0 or 1")
    if not (truth_max > 0 and lie_max > 0):
        raise AccountabilityError("grid bounds must be positive")
    if resolution < 2:
        raise AccountabilityError("resolution must be >= 2")
    lie = 1 - theta
    c_truth = np.linspace(0.0, truth_max, resolution)
    c_lie = np.linspace(0.0, lie_max, resolution)
    ct, cl = np.meshgrid(c_truth, c_lie, indexing="ij")
    a_t, a_l = c.purchase[theta], c.purchase[lie]
    p_t, p_l = c.accountability[theta], c.accountability[lie]
    truthful = a_t * (c.profit[theta][theta] - ct * p_t)
    misreport = a_l * (c.profit[theta][lie] - cl * p_l)
    tol = REL_TOL * np.maximum(1.0, np.maximum(np.abs(truthful), np.abs(misreport)))
    ok = (misreport <= truthful + tol) & (misreport >= -tol) & (cl > ct)
    if strict_ir:
        ok &= truthful >= -tol
    return PenaltyRegion(theta, c_truth, c_lie, ok)


def write_region_csv(region: PenaltyRegion, path):
    return write_csv(path, ("c_truth", "c_lie", "feasible"), region.rows())


# ---------------------------------------------------------------------------
# buyer risk and insurance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RiskModel:
    kind: str = "neutral"
    beta: float = 0.0  # CARA coefficient or PT diminishing sensitivity
    loss_aversion: float = 1.0
    zeta: float = 1.0

    def __post_init__(self):
        if self.kind == "neutral":
            return
        if self.kind == "cara":
            if self.beta == 0 or self.beta > 1:
                raise AccountabilityError(f"CARA coefficient must be nonzero and <= 1, got {self.beta}")
        elif self.kind == "prospect":
            if not self.loss_aversion > 1:
                raise AccountabilityError("prospect loss aversion must exceed 1")
            if not 0 < self.beta <= 1 or not 0 < self.zeta <= 1:
                raise AccountabilityError("prospect beta and zeta must lie in (0,1]")
        else:
            raise AccountabilityError(f"unknown risk model {self.kind!r}")

    @classmethod
    def neutral(cls):
        return cls("neutral")

    @classmethod
    def cara(cls, beta: float):
        return cls("cara", beta=beta)

    @classmethod
    def prospect(cls, loss_aversion: float = 2.25, beta: float = 0.88, zeta: float = 0.69):
        return cls("prospect", beta=beta, loss_aversion=loss_aversion, zeta=zeta)


@dataclass(frozen=True)
class BuyerEconomics:
    performance_gap: float  # Delta U_B
    accountability: float  # P_A^m
    procurement_cost: float = 0.0  # C_B(m)

    def __post_init__(self):
        if self.performance_gap < 0:
            raise AccountabilityError("performance gap must be >= 0")
        if not 0 <= self.accountability <= 1:
            raise AccountabilityError("accountability must lie in [0,1]")

    @property
    def expected_loss(self) -> float:
        return (1.0 - self.accountability) * self.performance_gap


@dataclass(frozen=True)
class InsurancePolicy:
    premium: float
    coverage: float

    def __post_init__(self):
        if self.premium < 0:
            raise AccountabilityError("premium must be >= 0")
        if not 0 <= self.coverage <= 1:
            raise AccountabilityError("coverage must lie in [0,1]")


def expected_loss(be: BuyerEconomics) -> float:
    return be.expected_loss


def probability_weight(p: float, zeta: float) -> float:
    """Prospect-theory weighting p^z / (p^z + (1-p)^z)."""
    if p <= 0:
        return 0.0
    if p >= 1:
        return 1.0
    a, b = p**zeta, (1 - p) ** zeta
    return a / (a + b)


def loss_utility(x: float, rm: RiskModel) -> float:
    """Biased magnitude of a loss of size x >= 0."""
    if rm.kind == "neutral":
        return x
    if rm.kind == "cara":
        return math.exp(rm.beta * x) / rm.beta
    return rm.loss_aversion * x**rm.beta


def biased_loss(be: BuyerEconomics, rm: RiskModel, weighted: bool = True) -> float:
    """Buyer's perceived expected loss Phi(L_B).

    ``weighted`` applies the prospect-theory probability weighting to the
    probability of an unaccountable outcome; it has no effect for the other
    risk models.
    """
    p = 1.0 - be.accountability
    if rm.kind == "prospect" and weighted:
        p = probability_weight(p, rm.zeta)
    return p * loss_utility(be.performance_gap, rm)


@dataclass(frozen=True)
class InsuranceCheck:
    feasible: bool
    insurer_ok: bool  # L_B <= C_I / r
    buyer_ok: bool  # C_I / r <= Phi(L_B)
    binding: tuple


def insurance_feasible(
    policy: InsurancePolicy, be: BuyerEconomics, rm: RiskModel, weighted: bool = True
) -> InsuranceCheck:
    """Two-sided condition L_B <= C_I / r <= Phi(L_B)."""
    if not policy.coverage > 0:
        raise AccountabilityError("coverage must be positive")
    ratio = policy.premium / policy.coverage
    loss = be.expected_loss
    phi = biased_loss(be, rm, weighted)
    insurer_ok = _leq(loss, ratio)
    buyer_ok = _leq(ratio, phi)
    binding = tuple(
        name
        for name, tight in (("IR_I", math.isclose(ratio, loss, rel_tol=1e-9, abs_tol=1e-15)),
                            ("IR_B", math.isclose(ratio, phi, rel_tol=1e-9, abs_tol=1e-15)))
        if tight
    )
    return InsuranceCheck(insurer_ok and buyer_ok, insurer_ok, buyer_ok, binding)


def max_premium_full_coverage(be: BuyerEconomics, rm: RiskModel, weighted: bool = False) -> tuple[float, float]:
    """(r*, C_I*) = (1, Phi(L_B)); by default without probability weighting,
    i.e. C_I* = (1 - P_A) * lambda * dU^beta for prospect buyers."""
    if rm.kind not in ("prospect", "cara"):
        raise AccountabilityError("maximum premium needs a risk-averse (prospect or CARA) buyer")
    return 1.0, biased_loss(be, rm, weighted)


@dataclass(frozen=True)
class CoverageInterval:
    r_lo: float
    r_hi: float
    degenerate: bool = False

    @property
    def empty(self) -> bool:
        return self.degenerate or self.r_lo > self.r_hi

    @property
    def buyer_optimum(self) -> float | None:
        return None if self.empty else self.r_hi

    @property
    def insurer_optimum(self) -> float | None:
        return None if self.empty else self.r_lo


def coverage_bounds(premium: float, be: BuyerEconomics, rm: RiskModel, weighted: bool = True) -> CoverageInterval:
    """Coverage levels r in (0,1] with C_I / Phi(L_B) <= r <= C_I / L_B.

    With no expected loss the interval is reported as degenerate.
    """
    if not premium > 0:
        raise AccountabilityError("premium must be positive")
    loss = be.expected_loss
    if loss <= 0:
        return CoverageInterval(math.nan, math.nan, degenerate=True)
    phi = biased_loss(be, rm, weighted)
    return CoverageInterval(premium / phi, min(premium / loss, 1.0))


def insurer_profit(policy: InsurancePolicy, be: BuyerEconomics) -> float:
    return policy.premium - policy.coverage * be.expected_loss


def buyer_payoff(policy: InsurancePolicy, be: BuyerEconomics, rm: RiskModel, weighted: bool = True) -> float:
    """(1 - r) Phi(L_B) + C_B + C_I as perceived by the buyer."""
    return (1 - policy.coverage) * biased_loss(be, rm, weighted) + be.procurement_cost + policy.premium


def premium_curve(delta_u_grid, accountability: float, rm: RiskModel) -> list[tuple[float, float]]:
    return [
        (float(du), max_premium_full_coverage(BuyerEconomics(float(du), accountability), rm)[1])
        for du in delta_u_grid
    ]


def coverage_curve(p_a_grid, premium: float, performance_gap: float, rm: RiskModel) -> list[tuple]:
    rows = []
    for p in p_a_grid:
        iv = coverage_bounds(premium, BuyerEconomics(performance_gap, float(p)), rm)
        rows.append((float(p), iv.r_lo, iv.r_hi))
    return rows


# ---------------------------------------------------------------------------
# accountability investment vs insurance
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TradeoffResult:
    n_star: int
    n: np.ndarray
    payoff: np.ndarray

    def rows(self):
        return list(zip(self.n.tolist(), self.payoff.tolist()))


def optimal_test_count(
    cost_per_test: float,
    be: BuyerEconomics,
    sensor_bias: float,
    noise_sigma: float,
    tau: float,
    rm: RiskModel,
    n_max: int,
) -> TradeoffResult:
    """Minimize J_B(N) = C_B + (1 - P_A(N)) phi(dU) + N c_n over N in 0..n_max.

    P_A(N) comes from the Gaussian sensor test with d = sqrt(N) e_d / sigma;
    with no tests the supplier can never be held accountable, P_A(0) = 0.
    Ties go to the smaller N. ``be.accountability`` is ignored.
    """
    if n_max < 1:
        raise AccountabilityError("n_max must be >= 1")
    if cost_per_test < 0:
        raise AccountabilityError("test cost must be >= 0")
    if rm.kind != "cara":
        raise AccountabilityError("the trade-off uses a CARA buyer")
    phi = loss_utility(be.performance_gap, rm)
    n = np.arange(n_max + 1)
    miss = np.array(
        [1.0] + [gaussian_miss_probability(math.sqrt(k) * sensor_bias / noise_sigma, tau) for k in n[1:]]
    )
    payoff = be.procurement_cost + miss * phi + n * cost_per_test
    return TradeoffResult(int(np.argmin(payoff)), n, payoff)


def write_tradeoff_csv(result: TradeoffResult, path):
    return write_csv(path, ("n", "payoff"), result.rows())


def write_premium_csv(rows, path):
    return write_csv(path, ("delta_u", "c_i_star"), rows)


def write_coverage_csv(rows, path):
    return write_csv(path, ("p_a", "r_lo", "r_hi"), rows)
