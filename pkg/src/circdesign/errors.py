"""Exception types shared across the package."""


class NotPositiveDefinite(ValueError):
    """A covariance matrix failed the positive-definiteness check."""


class DegenerateMeasure(ValueError):
    """The measure carries no information (all support on constant sequences)."""


class DegenerateTotalEffect(ValueError):
    """1 + lambda1 + lambda2 is (numerically) zero, so the total effect vanishes."""


class NotEstimable(RuntimeError):
    """No measure attains a positive smallest nonzero eigenvalue."""


class NoConvergence(RuntimeError):
    """The solver hit the iteration cap before reaching the gap tolerance.

    Carries the best iterate found so far in ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class BranchMismatch(RuntimeError):
    """Score evaluation requested data the measure state does not carry."""
