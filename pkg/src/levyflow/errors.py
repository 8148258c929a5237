"""Exception taxonomy shared across the package.

Exit-code mapping used by the CLI: ``UsageError``/``ConfigurationError``
terminate with code 1, ``NumericalError`` (and subclasses) with code 2,
acceptance/verification failures with code 3.
"""


class LevyflowError(Exception):
    """Base class for package errors."""


class UsageError(LevyflowError):
    """Caller violated an API precondition (shape mismatch, bad argument)."""


class ConfigurationError(LevyflowError):
    """Invalid run configuration; ``problems`` lists every violation found."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class NumericalError(LevyflowError):
    """A numerical procedure failed (solver breakdown, non-convergence)."""


class EigenSolveError(NumericalError):
    """Eigen-solver did not converge; carries the residual report."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class DensityBoundError(NumericalError):
    """Density left its certified bounds (mass-matrix factorization failed)."""


class BlowUpError(NumericalError):
    """Velocity coefficients became non-finite; carries the offending time."""

    def __init__(self, time):
        super().__init__(f"non-finite velocity coefficients at t={time:.6g}")
        self.time = time
