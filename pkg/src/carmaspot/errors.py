"""Exception hierarchy shared by all modules."""


class CarmaSpotError(Exception):
    """Base class for library errors."""


class DomainError(CarmaSpotError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class InfeasibleError(CarmaSpotError, ValueError):
    """A requested target cannot be reached by any admissible parameter."""


class EstimationError(CarmaSpotError, RuntimeError):
    """An estimator failed (degenerate data, singular design, no convergence)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class NotStationaryError(EstimationError):
    """CARMA parameters violate the stationarity conditions."""


class SingularFilterError(CarmaSpotError, ArithmeticError):
    """The L1 filter gain has a vanishing denominator."""


class DataError(CarmaSpotError, ValueError):
    """Input files or market records are malformed or inconsistent."""
