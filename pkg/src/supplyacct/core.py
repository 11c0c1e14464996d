"""Shared domain types: supplier profiles, observation models, reputation
priors, sample batches, and seeded random streams.

All types are frozen value objects. Randomness is always drawn from a
substream derived from ``(seed, index...)`` so that results depend only on
the seed and the logical position of a draw, never on execution order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import AccountabilityError, DegeneratePriorError

PROB_TOL = 1e-12
SEED_MAX = 2**64 - 1


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------

def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise AccountabilityError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise AccountabilityError(f"seed must fit in 64 unsigned bits, got {seed}")
    return seed


def substream(seed: int, *index: int) -> np.random.Generator:
    """Independent generator for the logical position ``index`` under ``seed``."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(i) for i in index))
    return np.random.default_rng(ss)


def block_sizes(total: int, block: int) -> list[int]:
    """Split ``total`` draws into fixed-size blocks (last one possibly short)."""
    full, rest = divmod(total, block)
    return [block] * full + ([rest] if rest else [])


# ---------------------------------------------------------------------------
# observation models
# ---------------------------------------------------------------------------

class ObservationModel:
    """Distribution of the performance variable under one hypothesis."""

    kind: str = ""

    @property
    def space(self):
        """``"real"`` for continuous models, the alphabet tuple for finite ones."""
        raise NotImplementedError

    def log_density(self, values) -> np.ndarray:
        raise NotImplementedError

    def density(self, values) -> np.ndarray:
        return np.exp(self.log_density(values))

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class GaussianModel(ObservationModel):
    mean: float
    variance: float
    kind: str = field(default="gaussian", init=False)

    def __post_init__(self):
        if not (math.isfinite(self.mean) and self.variance > 0 and math.isfinite(self.variance)):
            raise AccountabilityError(
                f"gaussian model needs a finite mean and variance > 0, got "
                f"mean={self.mean}, variance={self.variance}"
            )

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    @property
    def space(self):
        return "real"

    def log_density(self, values) -> np.ndarray:
        y = np.asarray(values, dtype=float)
        return -0.5 * (y - self.mean) ** 2 / self.variance - 0.5 * math.log(2 * math.pi * self.variance)

    def draw(self, rng, n):
        return rng.normal(self.mean, self.sigma, size=n)


class FiniteModel(ObservationModel):
    """Common behaviour of models over a finite alphabet."""

    alphabet: tuple
    probs: tuple

    @property
    def space(self):
        return tuple(self.alphabet)

    def log_density(self, values) -> np.ndarray:
        y = np.asarray(values, dtype=float)
        out = np.full(y.shape, -np.inf)
        with np.errstate(divide="ignore"):
            for symbol, p in zip(self.alphabet, self.probs):
                out[y == symbol] = math.log(p) if p > 0 else -np.inf
        return out

    def draw(self, rng, n):
        idx = rng.choice(len(self.alphabet), size=n, p=np.asarray(self.probs))
        return np.asarray(self.alphabet, dtype=float)[idx]


@dataclass(frozen=True)
class BernoulliModel(FiniteModel):
    success_prob: float
    kind: str = field(default="bernoulli", init=False)

    def __post_init__(self):
        if not 0.0 <= self.success_prob <= 1.0:
            raise AccountabilityError(f"success_prob must lie in [0,1], got {self.success_prob}")

    @property
    def alphabet(self):
        return (0.0, 1.0)

    @property
    def probs(self):
        return (1.0 - self.success_prob, self.success_prob)

    def draw(self, rng, n):
        return (rng.random(n) < self.success_prob).astype(float)


@dataclass(frozen=True)
class DiscreteModel(FiniteModel):
    alphabet: tuple
    probs: tuple
    kind: str = field(default="discrete", init=False)

    def __post_init__(self):
        alphabet = tuple(float(a) for a in self.alphabet)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "probs", probs)
        if len(alphabet) == 0 or len(alphabet) != len(probs):
            raise AccountabilityError("discrete model needs one probability per symbol")
        if len(set(alphabet)) != len(alphabet):
            raise AccountabilityError("discrete alphabet has repeated symbols")
        if any(p < 0 for p in probs) or abs(math.fsum(probs) - 1.0) > PROB_TOL:
            raise AccountabilityError(f"discrete probabilities must be >= 0 and sum to 1, got {probs}")


def finite_space(model: ObservationModel) -> tuple:
    """Alphabet and probability vector for a finite model, or raise."""
    if not isinstance(model, FiniteModel):
        raise AccountabilityError(f"{model.kind} model has no finite alphabet")
    return model.alphabet, model.probs


# ---------------------------------------------------------------------------
# reputation, supplier profile, sample batch
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Reputation:
    """Prior distribution over hypotheses."""

    prior: tuple

    def __post_init__(self):
        prior = tuple(float(p) for p in self.prior)
        object.__setattr__(self, "prior", prior)
        if len(prior) < 2:
            raise AccountabilityError("a reputation needs at least two hypotheses")
        if any(p < 0 for p in prior) or abs(math.fsum(prior) - 1.0) > PROB_TOL:
            raise AccountabilityError(f"prior must be nonnegative and sum to 1, got {prior}")

    @classmethod
    def binary(cls, pi0: float) -> "Reputation":
        return cls((pi0, 1.0 - pi0))

    @classmethod
    def uniform(cls, n: int) -> "Reputation":
        return cls(tuple([1.0 / n] * n))

    def __len__(self):
        return len(self.prior)


@dataclass(frozen=True)
class SupplierProfile:
    type_space: tuple
    true_type: object
    message: object
    purchase_prob: Mapping

    def __post_init__(self):
        object.__setattr__(self, "type_space", tuple(self.type_space))
        object.__setattr__(self, "purchase_prob", dict(self.purchase_prob))
        if self.true_type not in self.type_space or self.message not in self.type_space:
            raise AccountabilityError("true_type and message must belong to the type space")
        for m, a in self.purchase_prob.items():
            if m not in self.type_space or not 0.0 <= a <= 1.0:
                raise AccountabilityError(f"purchase probability for {m!r} must lie in [0,1]")

    @property
    def misinforms(self) -> bool:
        return self.message != self.true_type

    def alpha(self, m) -> float:
        return self.purchase_prob[m]


@dataclass(frozen=True, eq=False)
class SampleBatch:
    values: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        arr = np.array(self.values, dtype=float).reshape(-1)
        if arr.size < 1:
            raise AccountabilityError("a sample batch needs at least one observation")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, SampleBatch):
            return NotImplemented
        return self.seed == other.seed and np.array_equal(self.values, other.values)

    __hash__ = None

    @property
    def total(self) -> float:
        return float(self.values.sum())

    @property
    def mean(self) -> float:
        return float(self.values.mean())


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def bayes_threshold(rep: Reputation) -> float:
    """LRT threshold pi_0 / pi_1 for symmetric error costs."""
    if len(rep) != 2:
        raise AccountabilityError("bayes_threshold needs a two-hypothesis prior")
    pi0, pi1 = rep.prior
    if pi0 <= 0 or pi1 <= 0:
        raise DegeneratePriorError(f"both prior entries must be positive, got {rep.prior}")
    return pi0 / pi1


def sample(model: ObservationModel, n: int, seed: int) -> SampleBatch:
    if n < 1:
        raise AccountabilityError(f"sample size must be >= 1, got {n}")
    values = model.draw(substream(seed), n)
    return SampleBatch(values, seed=check_seed(seed))


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def fmt(x) -> str:
    """12 significant digits for floats; ints and strings pass through."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{float(x):.12g}"
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path
