"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: hypothesis problems exit 2, principled
refusals exit 3, numerical failures exit 4.
"""


class SturmError(Exception):
    """Base class for every error raised by the toolkit."""

    exit_code = 4


class ExprError(SturmError):
    exit_code = 2


class ExprSyntaxError(ExprError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownFunctionError(ExprSyntaxError):
    pass


class UnboundParameterError(ExprError):
    def __init__(self, name):
        super().__init__(f"parameter {name!r} is not bound")
        self.name = name


class DomainError(ExprError, ArithmeticError):
    """Evaluation left the real domain of some subexpression."""


class HypothesisError(SturmError):
    """A theorem hypothesis (P >= p, positivity, independence, ...) fails."""

    exit_code = 2


class RefusalError(SturmError):
    """The requested construction is impossible on principle.

    Raised, for instance, when both endpoint integrals diverge, so that no
    counterexample exists, or when a classification is undecided and the
    builders decline to certify anything.
    """

    exit_code = 3


class NumericalFailure(SturmError):
    exit_code = 4


class StepSizeUnderflow(NumericalFailure):
    def __init__(self, x):
        super().__init__(f"step size underflow at x={x!r}")
        self.x = x


class CoverageError(NumericalFailure):
    """A point was requested outside the range a trajectory covers."""
