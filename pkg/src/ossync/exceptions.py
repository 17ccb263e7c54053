"""Exception classes raised by ossync."""


class OssyncError(Exception):
    """Base class for all errors raised by this package."""


class SpectraOverlap(OssyncError):
    """Sylvester operands share (numerically) an eigenvalue."""

    def __init__(self, pair, distance):
        self.pair = pair
        self.distance = distance
        super().__init__(
            f"spectra overlap: eigenvalues {pair[0]:.6g} and {pair[1]:.6g} "
            f"are {distance:.3g} apart")


class SingularMatrix(OssyncError):
    pass


class NotStabilizable(OssyncError):
    pass


class NoStabilizingSolution(OssyncError):
    pass


class NoSpanningTree(OssyncError):
    pass


class InconsistentCheck(OssyncError, RuntimeWarning):
    """Graph search and Laplacian spectrum disagree on connectivity."""


class SigmaTooLarge(OssyncError):
    pass


class DuplicateFrequency(OssyncError):
    pass


class DimensionMismatch(OssyncError):
    pass


class IrrationalRatio(OssyncError):
    pass


class NoSolution(OssyncError):
    """The regulator equations have no exact solution."""

    def __init__(self, residual):
        self.residual = residual
        super().__init__(f"regulator equations unsolvable (residual {residual:.3e})")


class ImaginaryAxisHamiltonian(OssyncError):
    pass


class SingularKkt(OssyncError):
    pass


class NumericalBreakdown(OssyncError):
    pass


class StalledStep(OssyncError):
    pass


class InfeasibleInitialPoint(OssyncError):
    pass


class NoFeasibleQ(OssyncError):
    pass


class NonFiniteState(OssyncError):
    pass


class WindowOutOfRange(OssyncError):
    pass


class ScenarioError(OssyncError):
    """Malformed scenario document."""
