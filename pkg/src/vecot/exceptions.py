"""Exception and warning classes raised across the package."""


class TransportError(Exception):
    """Base class for all errors raised by vecot."""


class InputError(TransportError, ValueError):
    """Invalid user input (graph, density, configuration)."""


class DisconnectedGraph(InputError):
    pass


class NonpositiveWeight(InputError):
    pass


class SelfLoop(InputError):
    pass


class DuplicateEdge(InputError):
    pass


class EmptyShape(InputError):
    pass


class ChannelCountMismatch(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class StepTooLarge(InputError):
    pass


class MarginalMismatch(InputError):
    pass


class BadGamma(InputError):
    pass


class BadTimeGrid(InputError):
    pass


class InfeasibleBoundary(InputError):
    """Start and end marginals carry different total mass."""


class MassMismatch(InputError):
    pass


class NonpositiveEntry(InputError):
    pass


class ScaleExceeded(InputError):
    """Instance too large for a dense oracle."""


class UnsupportedFormat(InputError):
    pass


class ZeroImage(InputError):
    pass


class NumericalError(TransportError, ArithmeticError):
    """Internal numerical failure. For finite inputs these indicate a defect."""


class NonconvergentRootFind(NumericalError):
    pass


class CGStall(NumericalError):
    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class StepUnderflow(NumericalError):
    pass


class IOFailure(TransportError, OSError):
    pass


class MaxIterationsExceeded(UserWarning):
    """Issued when a solver stops at ``max_iters`` before meeting its tolerances.

    The best iterate is still returned, flagged ``converged=False``.
    """
