"""Supplier accountability for IoT supply chains.

Hypothesis tests that attribute a failure to a supplier, AROC analysis of
their accountability, a platoon sensor case study, multi-stage supply-chain
investigation and the contract and insurance economics built on top.
"""

from .core import (
    BernoulliModel,
    DiscreteModel,
    GaussianModel,
    Reputation,
    SampleBatch,
    SupplierProfile,
    bayes_threshold,
    sample,
)
from .errors import AccountabilityError

__version__ = "0.1.0"

__all__ = [
    "AccountabilityError",
    "BernoulliModel",
    "DiscreteModel",
    "GaussianModel",
    "Reputation",
    "SampleBatch",
    "SupplierProfile",
    "bayes_threshold",
    "sample",
]
