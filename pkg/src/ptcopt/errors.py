"""Exception types shared across the package."""


class PtcError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(PtcError, ValueError):
    """Array shapes are inconsistent with the declared problem dimensions."""


class NumericalBreakdown(PtcError, ArithmeticError):
    """The simplex solver hit a pivot too small to trust (< 1e-12)."""


class NotPsd(PtcError, ValueError):
    """Matrix could not be factorized even at the maximum jitter level."""


class ConfigInvalid(PtcError, ValueError):
    """A model or experiment configuration failed validation."""


class SingularSystem(PtcError, ArithmeticError):
    """A linear system required by a closed-form fit is singular."""


class TooFewSamples(PtcError, ValueError):
    """Not enough samples to perform the requested split or fit."""


class EmptyScores(PtcError, ValueError):
    """Conformal adjustment called with an empty score list."""


class NoNeighbors(PtcError, ValueError):
    """All kernel weights vanished at the target covariate."""


class DomainError(PtcError, ValueError):
    """Arguments outside the mathematical domain of a closed-form oracle."""


class NotConverged(PtcError, RuntimeError):
    """Iterative solver stopped at max_iter; carries the best iterate found.

    Attributes:
        solution: best iterate as an LpSolution.
        gap: Frank-Wolfe duality gap at the best iterate.
    """

    def __init__(self, message, solution=None, gap=None):
        super().__init__(message)
        self.solution = solution
        self.gap = gap


class InfiniteEtaWarning(UserWarning):
    """Conformal scale came out infinite; a conservative fallback set is used."""
