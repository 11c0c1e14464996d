"""Exception hierarchy shared by every analysis module."""


class AccountabilityError(ValueError):
    """Base class for all library errors."""


class DegeneratePriorError(AccountabilityError):
    """A reputation prior puts zero mass on a hypothesis that needs it."""


class SupportError(AccountabilityError):
    """An observation falls outside the support of the reference model."""


class UndefinedIndexError(AccountabilityError):
    """Detectability index of zero combined with a non-unit threshold."""


class EnumerationSizeError(AccountabilityError):
    """Exact enumeration would exceed the tuple cap."""


class ImproperTestError(AccountabilityError):
    """The test performs worse than chance (P_e > 1/2)."""


class DegenerateScenarioError(AccountabilityError):
    """Scenario parameters make the two hypotheses indistinguishable."""


class RiccatiError(AccountabilityError):
    """The Riccati solver did not reach the requested residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class DivergenceError(AccountabilityError):
    """Closed-loop simulation blew up."""


class ConfigError(AccountabilityError):
    """A graph or scenario document is malformed or fails validation."""
