"""Exception hierarchy shared by the numerical and simulation layers."""


class CbmError(Exception):
    pass


class PreconditionError(CbmError, ValueError):
    """An input violates the stated hypotheses of the requested operation."""


class DegenerateMechanismError(PreconditionError):
    """The associated Levy process has a.s. nondecreasing paths."""


class ConditionViolated(PreconditionError):
    """The scale-function hypotheses fail, so no formula is available."""


class NotExplosiveError(PreconditionError):
    """The branching mechanism satisfies the non-explosion integral test."""


class NotInvertibleError(CbmError):
    """Bracketing of a right-continuous inverse failed."""


class QuadratureError(CbmError):
    """Adaptive quadrature missed its tolerance.

    The best value found and its error estimate are attached.
    """

    def __init__(self, message, value=float("nan"), abs_error=float("inf")):
        super().__init__(f"{message} (value={value!r}, achieved error={abs_error:.3g})")
        self.value = value
        self.abs_error = abs_error


class UndecidedByPaper(CbmError):
    """The available criteria do not settle the question for this input."""
