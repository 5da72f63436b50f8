class PolarChainError(ValueError):
    """Base class for every error raised by the library."""


class ConfigError(PolarChainError):
    pass


class DegenerateChannel(PolarChainError):
    """The eavesdropper is not strictly worse than receiver 1; no secrecy rate."""


class MethodUnsupported(PolarChainError):
    pass


class CaseUndefined(PolarChainError):
    """The partition sizes violate the ordering needed by cases A-D."""


class InfeasiblePlan(PolarChainError):
    pass


class DimensionMismatch(PolarChainError):
    pass


class LengthMismatch(PolarChainError):
    """A chained sequence does not fit the slot it is written into."""


class BudgetExceeded(PolarChainError):
    pass
