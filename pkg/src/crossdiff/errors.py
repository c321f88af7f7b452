"""Exception hierarchy shared by all modules."""


class CrossDiffError(Exception):
    """Base class for every error raised by this package."""


# image I/O
class MalformedHeader(CrossDiffError, ValueError):
    pass


class TruncatedData(CrossDiffError, ValueError):
    pass


class UnsupportedMaxval(CrossDiffError, ValueError):
    pass


# metrics / noise
class ShapeMismatch(CrossDiffError, ValueError):
    pass


class ConstantImage(CrossDiffError, ValueError):
    pass


class ZeroDenominator(CrossDiffError, ZeroDivisionError):
    pass


class ZeroNorm(CrossDiffError, ZeroDivisionError):
    pass


# grids and assembly
class TooSmall(CrossDiffError, ValueError):
    pass


class BadDimensions(CrossDiffError, ValueError):
    pass


class NonPositiveDetector(CrossDiffError, ValueError):
    pass


# numerical failures
class NumericalError(CrossDiffError, ArithmeticError):
    """Failures of a solver or iteration (CLI exit code 3)."""


class SolverDiverged(NumericalError):
    pass


class SingularMatrix(NumericalError):
    pass


class FixedPointStalled(NumericalError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class HypothesisViolated(CrossDiffError, ValueError):
    """The diffusion matrix fails the well-posedness conditions."""

    def __init__(self, clause, message):
        super().__init__(f"{clause}: {message}")
        self.clause = clause


class UnstableTimeStep(CrossDiffError, ValueError):
    pass
