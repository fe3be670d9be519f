"""Exception hierarchy. Each top-level class maps to one CLI exit code."""


class HamSwitchError(Exception):
    exit_code = 1


class ConfigurationError(HamSwitchError, ValueError):
    """Bad parameters, unknown system names, mismatched shapes."""

    exit_code = 2


class BlowUpError(HamSwitchError, ArithmeticError):
    """Numerical state left the representable range (usually dt too large)."""

    exit_code = 3

    def __init__(self, message, state=None, time=None):
        super().__init__(message)
        self.state = state
        self.time = time


class InvariantViolation(HamSwitchError):
    """A model invariant failed at an evaluated point."""

    exit_code = 4


class DominationError(InvariantViolation):
    """A switching rate exceeded its dominating bound, or left the bound's support."""


class RunawaySwitchingError(InvariantViolation):
    pass


class NormalizationError(InvariantViolation):
    """A Lyapunov candidate dropped below 1 on the verification grid."""


class UnknownSystemError(ConfigurationError):
    """The requested system name is not registered."""

    exit_code = 6


class PreconditionError(ConfigurationError):
    pass


class UnsupportedOrderError(ConfigurationError):
    pass


class OutputError(HamSwitchError, OSError):
    exit_code = 5
