"""Exception hierarchy. Every domain error derives from :class:`DomainError`
so the CLI can map the whole family to exit code 1."""


class DomainError(Exception):
    """Base class for errors raised on well-formed but infeasible input."""


class NonPositiveParam(DomainError, ValueError):
    pass


class AlphaOutOfRange(DomainError, ValueError):
    pass


class RiskAversionInfeasible(DomainError, ValueError):
    pass


class BracketNotFound(DomainError, RuntimeError):
    pass


class NoRoot(DomainError, RuntimeError):
    def __init__(self, message, profile=None):
        super().__init__(message)
        # (y, residual) pairs sampled along the search interval
        self.profile = profile or []


class ConstantMismatch(DomainError, RuntimeError):
    pass


class OrderingViolation(DomainError, RuntimeError):
    pass


class OutOfDualRange(DomainError, ValueError):
    pass


class OutOfPrimalRange(DomainError, ValueError):
    pass


class InvalidState(DomainError, ValueError):
    pass


class InvalidSimConfig(DomainError, ValueError):
    pass


class NonFiniteState(DomainError, FloatingPointError):
    pass


class SimulationAborted(DomainError, RuntimeError):
    pass
