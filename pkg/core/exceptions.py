"""
Errors raised by the lab.

Commands map ContractViolation to exit code 2 and NumericFailure to exit code 3.
"""


class ContractViolation(ValueError):
    """A precondition on shapes, lengths or ranges does not hold."""


class DegenerateDirectionError(ContractViolation):
    """No orthogonal direction can be built from a zero trajectory."""


class InsufficientDimensionError(ContractViolation):
    """The parameter space is too small for the requested orthogonal basis."""


class UndefinedAngleError(ContractViolation):
    """The gradient vanishes at one of the points being compared."""


class CheckpointError(ContractViolation):
    """A checkpoint file is malformed or does not match the expected spec."""


class NumericFailure(ArithmeticError):
    """A computed quantity became NaN or infinite."""

    def __init__(self, component, message=None):
        self.component = component
        super().__init__(message or f"Non-finite value in {component}")


def require(condition, message):
    """Raise ContractViolation with message unless condition holds."""
    if not condition:
        raise ContractViolation(message)


class ConfigError(ContractViolation):
    """An experiment config file is unreadable, malformed or invalid."""
