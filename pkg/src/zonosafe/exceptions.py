"""Exception hierarchy shared by all modules."""


class ZonosafeError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(ZonosafeError, ValueError):
    """Operands have inconsistent dimensions."""


class EmptySetError(ZonosafeError):
    """A set that must be nonempty turned out (or is suspected) to be empty."""


class LPError(ZonosafeError):
    """The LP backend failed numerically (distinct from infeasibility)."""


class RankDeficiencyError(ZonosafeError):
    """The stacked data matrix [X0; U0] does not have full row rank."""


class InconsistentGainError(ZonosafeError):
    """A gain parametrization does not satisfy X0 V_K = I within tolerance."""


class ConfigError(ZonosafeError):
    """Invalid experiment configuration.

    ``line`` is the 1-based line in the config file when it is known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnboundedSetError(ZonosafeError):
    """A set that must be bounded is unbounded."""


class InfeasibleSynthesisError(ZonosafeError):
    """No controller could be certified for the requested contraction factor."""
