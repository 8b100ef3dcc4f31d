"""Exception hierarchy shared across the package."""


class InformedPolicyError(Exception):
    """Base class for all package errors."""


class EvaluationError(InformedPolicyError, ArithmeticError):
    """A dynamics or expression evaluation produced a non-finite value."""


class DomainError(EvaluationError):
    """Division by zero inside an expression."""


class ExprSyntaxError(InformedPolicyError, ValueError):
    """Malformed expression text. ``offset`` is a byte offset into the input."""

    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ConfigError(InformedPolicyError, ValueError):
    pass


class GridTooLargeError(InformedPolicyError, ValueError):
    pass


class LPError(InformedPolicyError):
    """The LP backend failed or returned a non-optimal status where one was required."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class SoundnessError(InformedPolicyError):
    """A random sample produced an error outside the fitted box."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class InfeasibleSynthesisError(InformedPolicyError):
    """No linear policy certifies the constraints; carries the Farkas certificate."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class ConcretizationError(InformedPolicyError):
    pass


class ConstraintViolationError(ConcretizationError):
    def __init__(self, message, u=None):
        super().__init__(message)
        self.u = u


class DivergenceError(ConcretizationError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class NoSolutionError(ConcretizationError):
    pass
