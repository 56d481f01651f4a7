"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Input array has the wrong shape, contains non-finite values, etc."""


class SingularCovarianceError(ValueError):
    """A covariance matrix is singular or below the configured floor."""


class ImagingImpossibleError(ValueError):
    """No real lens satisfies the imaging condition for this geometry."""


class EstimabilityError(ValueError):
    """``U (I - A^- A) != 0``: the reduction error would be infinite."""

    def __init__(self, message, deficiency=None):
        super().__init__(message)
        self.deficiency = deficiency


class NonConvergenceError(RuntimeError):
    """An iterative solver hit its iteration limit.

    The best iterate found so far is kept in ``best`` together with its
    residual so callers can decide whether it is good enough.
    """

    def __init__(self, message, best=None, residual=None, iterations=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.iterations = iterations
