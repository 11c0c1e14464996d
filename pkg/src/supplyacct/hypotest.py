"""Accountability tests.

Binary likelihood-ratio tests with a Bayesian threshold, the closed-form
Gaussian accountability pair, the Neyman-Pearson binomial test, M-ary MAP
decisions with exact error probability, and the decentralized fusion of
per-supplier bits into a joint hypothesis index.

Label convention: in the generic binary test ``h0`` is the anticipated
(truthful) model and ``h1`` the misinformation model, so accountability is
``Pr(L >= tau | H1)``. The platoon case study swaps the labels; see
:func:`accountability_gaussian`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special, stats

from .core import (
    BernoulliModel,
    FiniteModel,
    GaussianModel,
    ObservationModel,
    Reputation,
    SampleBatch,
)
from .errors import (
    AccountabilityError,
    EnumerationSizeError,
    SupportError,
    UndefinedIndexError,
)

ENUMERATION_CAP = 10**6
# log-space slack when deciding ties L == tau on enumerated outcomes
LOG_TIE_TOL = 1e-10


# ---------------------------------------------------------------------------
# Gaussian tail helpers
# ---------------------------------------------------------------------------

def q_function(x):
    """Gaussian tail probability Q(x) = Pr(Z > x)."""
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def q_inverse(p):
    """Inverse of :func:`q_function` on (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise AccountabilityError("q_inverse is defined on the open interval (0, 1)")
    # Q^{-1}(p) = -Phi^{-1}(p); ndtri keeps full relative accuracy for small p
    return -special.ndtri(p)


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HypothesisPair:
    h0: ObservationModel
    h1: ObservationModel
    labels: tuple = ("truthful", "misinformation")

    def __post_init__(self):
        if self.h0.space != self.h1.space:
            raise AccountabilityError(
                f"hypotheses live on different observation spaces: {self.h0.space} vs {self.h1.space}"
            )


@dataclass(frozen=True)
class TestOutcome:
    """Accountability P_A, wronged accountability P_U and the threshold used."""

    __test__ = False  # not a pytest class

    accountability: float
    wronged: float
    decision_threshold: float

    def __post_init__(self):
        for name in ("accountability", "wronged"):
            v = getattr(self, name)
            if not -1e-15 <= v <= 1 + 1e-15:
                raise AccountabilityError(f"{name} must lie in [0,1], got {v}")


@dataclass(frozen=True)
class NPConfig:
    false_alarm_bound: float
    n_trials: int

    def __post_init__(self):
        if not 0.0 < self.false_alarm_bound < 1.0:
            raise AccountabilityError(f"false alarm bound must lie in (0,1), got {self.false_alarm_bound}")
        if self.n_trials < 1:
            raise AccountabilityError(f"n_trials must be >= 1, got {self.n_trials}")


@dataclass(frozen=True)
class NPThreshold:
    threshold: int
    false_alarm: float


@dataclass(frozen=True)
class HypothesisVector:
    """Accountability bits (h_1..h_N); ``index`` is their binary value, h_1 most significant."""

    bits: tuple
    index: int = field(default=-1)

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if not bits or any(b not in (0, 1) for b in bits):
            raise AccountabilityError(f"hypothesis bits must be a nonempty 0/1 tuple, got {self.bits}")
        value = int("".join(map(str, bits)), 2)
        if self.index == -1:
            object.__setattr__(self, "index", value)
        elif self.index != value:
            raise AccountabilityError(f"index {self.index} does not encode bits {bits}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_index(cls, index: int, n: int) -> "HypothesisVector":
        if not 0 <= index < 2**n:
            raise AccountabilityError(f"index {index} out of range for {n} suppliers")
        return cls(tuple(int(c) for c in format(index, f"0{n}b")))

    @property
    def label(self) -> str:
        return f"H{self.index}"


# ---------------------------------------------------------------------------
# binary likelihood-ratio test
# ---------------------------------------------------------------------------

def log_likelihood_ratio(pair: HypothesisPair, batch: SampleBatch) -> float:
    y = batch.values
    log0 = pair.h0.log_density(y)
    if np.any(np.isneginf(log0)):
        bad = y[np.isneginf(log0)][0]
        raise SupportError(f"observation {bad} has zero density under {pair.labels[0]}")
    log1 = pair.h1.log_density(y)
    return float(np.sum(log1 - log0))


def likelihood_ratio(pair: HypothesisPair, batch: SampleBatch) -> float:
    """prod_j f(y_j | H1) / f(y_j | H0), accumulated in log space."""
    llr = log_likelihood_ratio(pair, batch)
    if llr > 709.0:
        return math.inf
    return math.exp(llr)


def lrt_decide(ratio: float, tau: float) -> int:
    """1 (establish H1) iff ratio >= tau."""
    if not tau > 0:
        raise AccountabilityError(f"LRT threshold must be positive, got {tau}")
    return int(ratio >= tau)


def accountability_gaussian(d: float, tau: float) -> TestOutcome:
    """Closed-form outcome of the equal-variance Gaussian mean-shift test.

    Uses the platoon labels: ``tau = pi_0 / pi_1`` with H0 the misinformation
    hypothesis, so P_A = 1 - Q(d/2 + ln tau / d) and P_U = Q(d/2 - ln tau / d).
    """
    if not tau > 0:
        raise AccountabilityError(f"threshold must be positive, got {tau}")
    if d < 0:
        raise AccountabilityError(f"detectability index must be >= 0, got {d}")
    if d == 0:
        if tau != 1:
            raise UndefinedIndexError("d = 0 with tau != 1 leaves ln(tau)/d undefined")
        return TestOutcome(0.5, 0.5, 1.0)
    shift = math.log(tau) / d
    # 1 - Q(x) == Q(-x), without cancellation in the lower tail
    p_a = float(q_function(-(d / 2 + shift)))
    p_u = float(q_function(d / 2 - shift))
    return TestOutcome(p_a, p_u, tau)


def gaussian_miss_probability(d: float, tau: float) -> float:
    """1 - P_A of :func:`accountability_gaussian` without cancellation."""
    if d <= 0:
        return 1.0 - accountability_gaussian(d, tau).accountability
    return float(q_function(d / 2 + math.log(tau) / d))


def _bernoulli_log_ratio(s: np.ndarray, k: int, p0: float, p1: float) -> np.ndarray:
    """Log likelihood ratio for s successes out of k, handling p in {0, 1}."""
    with np.errstate(divide="ignore", invalid="ignore"):
        succ = np.where(s > 0, s * (np.log(p1) - np.log(p0)), 0.0)
        fail = np.where(k - s > 0, (k - s) * (np.log1p(-p1) - np.log1p(-p0)), 0.0)
    return succ + fail


def lrt_outcome(pair: HypothesisPair, tau: float, n_obs: int) -> TestOutcome:
    """Exact (P_A, P_U) of the LRT ``L >= tau`` on ``n_obs`` i.i.d. observations.

    P_A = Pr(L >= tau | H1), P_U = Pr(L >= tau | H0). Supports equal-variance
    Gaussian pairs (closed form), Bernoulli pairs (binomial sufficient
    statistic) and finite alphabets (enumeration up to the tuple cap).
    """
    if not tau > 0:
        raise AccountabilityError(f"threshold must be positive, got {tau}")
    if n_obs < 1:
        raise AccountabilityError("n_obs must be >= 1")
    h0, h1 = pair.h0, pair.h1
    log_tau = math.log(tau)

    if isinstance(h0, GaussianModel) and isinstance(h1, GaussianModel):
        if not math.isclose(h0.variance, h1.variance, rel_tol=1e-12):
            raise AccountabilityError("closed-form LRT outcome needs equal variances")
        d = math.sqrt(n_obs) * abs(h1.mean - h0.mean) / h0.sigma
        if d == 0:
            hit = 1.0 if log_tau <= 0 else 0.0
            return TestOutcome(hit, hit, tau)
        # log L ~ N(+d^2/2, d^2) under H1 and N(-d^2/2, d^2) under H0
        p_a = float(q_function((log_tau - d * d / 2) / d))
        p_u = float(q_function((log_tau + d * d / 2) / d))
        return TestOutcome(p_a, p_u, tau)

    if isinstance(h0, BernoulliModel) and isinstance(h1, BernoulliModel):
        s = np.arange(n_obs + 1)
        llr = _bernoulli_log_ratio(s, n_obs, h0.success_prob, h1.success_prob)
        llr = np.nan_to_num(llr, nan=-np.inf)
        region = llr >= log_tau - LOG_TIE_TOL
        p_a = float(stats.binom.pmf(s[region], n_obs, h1.success_prob).sum())
        p_u = float(stats.binom.pmf(s[region], n_obs, h0.success_prob).sum())
        return TestOutcome(min(p_a, 1.0), min(p_u, 1.0), tau)

    if isinstance(h0, FiniteModel) and isinstance(h1, FiniteModel):
        loglik = tuple_log_likelihoods([h0, h1], n_obs)
        with np.errstate(invalid="ignore"):
            llr = loglik[1] - loglik[0]
        # impossible under H0 but possible under H1 -> infinite ratio
        llr = np.where(np.isneginf(loglik[0]) & np.isfinite(loglik[1]), np.inf, llr)
        llr = np.nan_to_num(llr, nan=-np.inf)
        region = llr >= log_tau - LOG_TIE_TOL
        lik = np.exp(loglik)
        p_a = float(lik[1][region].sum())
        p_u = float(lik[0][region].sum())
        return TestOutcome(min(p_a, 1.0), min(p_u, 1.0), tau)

    raise AccountabilityError(f"no exact LRT outcome for {h0.kind}/{h1.kind} pairs")


# ---------------------------------------------------------------------------
# Neyman-Pearson binomial test
# ---------------------------------------------------------------------------

def np_binomial_test(mu0: float, cfg: NPConfig) -> NPThreshold:
    """Quantile threshold for ``S < lambda`` with S ~ Binomial(N, mu0) under H0.

    lambda = inf{x : F_S(x) > alpha}, the largest threshold whose false
    alarm Pr(S < lambda | H0) = F_S(lambda - 1) stays <= alpha. It differs
    from the ``>= alpha`` quantile only when F_S hits alpha exactly, where
    the strict form keeps the test most powerful.
    """
    if not 0.0 < mu0 < 1.0:
        raise AccountabilityError(f"mu0 must lie in (0,1), got {mu0}")
    n = cfg.n_trials
    cdf = stats.binom.cdf(np.arange(n + 1), n, mu0)
    exceeds = cdf > cfg.false_alarm_bound
    lam = int(np.argmax(exceeds)) if exceeds.any() else n
    false_alarm = float(cdf[lam - 1]) if lam > 0 else 0.0
    return NPThreshold(lam, false_alarm)


def np_detection_probability(mu1: float, n_trials: int, threshold: int) -> float:
    """Pr(S < threshold) under the degraded accuracy mu1."""
    if threshold <= 0:
        return 0.0
    return float(stats.binom.cdf(threshold - 1, n_trials, mu1))


def np_decide(successes: int, threshold: int) -> int:
    """1 (hold accountable) iff the success count falls below the threshold."""
    return int(successes < threshold)


# ---------------------------------------------------------------------------
# M-ary testing
# ---------------------------------------------------------------------------

def _finite_models(models: Sequence[ObservationModel]) -> tuple:
    if len(models) < 2:
        raise AccountabilityError("M-ary testing needs at least two hypotheses")
    if not all(isinstance(m, FiniteModel) for m in models):
        raise AccountabilityError("M-ary testing needs finite-alphabet models")
    alphabet = models[0].alphabet
    if any(m.alphabet != alphabet for m in models):
        raise AccountabilityError("all hypotheses must share one alphabet")
    return alphabet


def tuple_log_likelihoods(models: Sequence[ObservationModel], n_obs: int) -> np.ndarray:
    """Log-likelihood of every observation tuple, shape (T, A**n_obs).

    Tuples are ordered like ``itertools.product(alphabet, repeat=n_obs)``.
    """
    alphabet = _finite_models(models)
    if len(alphabet) ** n_obs > ENUMERATION_CAP:
        raise EnumerationSizeError(
            f"{len(alphabet)}^{n_obs} tuples exceeds the enumeration cap {ENUMERATION_CAP}"
        )
    with np.errstate(divide="ignore"):
        logp = np.log(np.array([m.probs for m in models], dtype=float))
    out = np.zeros((len(models), 1))
    for _ in range(n_obs):
        out = (out[:, :, None] + logp[:, None, :]).reshape(len(models), -1)
    return out


def _log_prior(prior: Reputation, n: int) -> np.ndarray:
    if len(prior) != n:
        raise AccountabilityError(f"prior has {len(prior)} entries for {n} hypotheses")
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(prior.prior))


def map_decide_mary(models: Sequence[ObservationModel], prior: Reputation, batch: SampleBatch) -> int:
    """MAP hypothesis index; ties go to the smallest index."""
    _finite_models(models)
    if batch is None or len(batch) == 0:
        raise AccountabilityError("empty batch")
    scores = _log_prior(prior, len(models)) + np.array(
        [m.log_density(batch.values).sum() for m in models]
    )
    if np.all(np.isneginf(scores)):
        raise SupportError("batch has zero posterior mass under every hypothesis")
    return int(np.argmax(scores))


def _map_decisions(models, prior, n_obs):
    loglik = tuple_log_likelihoods(models, n_obs)
    scores = _log_prior(prior, len(models))[:, None] + loglik
    return np.argmax(scores, axis=0), np.exp(loglik)


def mary_error_prob(models: Sequence[ObservationModel], prior: Reputation, n_obs: int = 1) -> float:
    """P_e = sum_t Pr(error | H_t) pi(t) under the MAP rule, by exact enumeration."""
    decision, lik = _map_decisions(models, prior, n_obs)
    pi = np.asarray(prior.prior)
    correct = pi[decision] * lik[decision, np.arange(lik.shape[1])]
    return float(min(max(1.0 - correct.sum(), 0.0), 1.0))


def mary_accountability(
    models: Sequence[ObservationModel], prior: Reputation, message: int, n_obs: int = 1
) -> float:
    """Sum over t != message of Pr(decide H_t | H_t) under the MAP rule."""
    if not 0 <= message < len(models):
        raise AccountabilityError(f"message index {message} out of range")
    decision, lik = _map_decisions(models, prior, n_obs)
    total = 0.0
    for t in range(len(models)):
        if t != message:
            total += float(lik[t][decision == t].sum())
    return total


# ---------------------------------------------------------------------------
# decentralized fusion
# ---------------------------------------------------------------------------

def decentralized_fuse(bits) -> int:
    """Joint hypothesis index from per-supplier accountability bits."""
    if not isinstance(bits, HypothesisVector):
        bits = HypothesisVector(tuple(bits))
    return bits.index
