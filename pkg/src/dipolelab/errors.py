"""Exception types shared across the package."""


class DipoleLabError(Exception):
    pass


class OutOfDomain(DipoleLabError, ValueError):
    pass


class AxisSingular(DipoleLabError, ValueError):
    pass


class StepTooLarge(DipoleLabError, ValueError):
    pass


class NoConvergence(DipoleLabError, RuntimeError):
    pass


class BudgetExceeded(DipoleLabError, RuntimeError):
    """Raised when an adaptive integrator runs out of cells.

    The partial result is attached so callers can still report it.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ProbeTooClose(DipoleLabError, ValueError):
    pass


class MembershipAmbiguous(DipoleLabError, ValueError):
    pass


class HypothesisViolated(DipoleLabError, ValueError):
    pass


class ConfigError(DipoleLabError, ValueError):
    pass
