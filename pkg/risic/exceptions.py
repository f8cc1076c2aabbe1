class RisError(Exception):
    """
    Base exception for every failure raised by risic.
    Attributes:
    message -- explanation of the error
    cause -- the original exception that caused this error (optional)
    """

    def __init__(self, message: str, cause: Exception | None = None):
        self.message = message
        self.cause = cause
        super().__init__(self.message)

    def __str__(self) -> str:
        if self.cause:
            return f"{self.message} (Caused by: {str(self.cause)})"
        return self.message


class ConfigError(RisError):
    """Invalid configuration value or configuration file."""


class DimensionError(RisError):
    """Array shapes inconsistent with the system dimensions."""


class CollocatedNodesError(RisError):
    """Two nodes share a position, so path loss is undefined."""


class CombinerError(RisError):
    """A BS combiner row is zero."""


class DegenerateSolutionError(RisError):
    """A lifted solution cannot be normalised (its anchor entry vanishes)."""


class SolverError(RisError):
    """The SDP solver failed or returned an unusable status."""


class UnsupportedError(RisError):
    """Operation requested outside the regime it is defined for."""


class IcUnavailableError(RisError):
    """The interference-cancellation representation does not exist for this drop."""


class UnderdeterminedError(IcUnavailableError):
    """Fewer RIS elements than interference-cancellation equations."""


class IllConditionedError(IcUnavailableError):
    """The stacked RIS channel is numerically rank deficient."""


class IcInfeasibleError(RisError):
    """No effective D2D gain keeps every |phi_n| <= 1."""
