"""Exception types raised by the estimators and their helpers."""


class DeconvError(Exception):
    """Base class for all package errors."""


class MissingKappa(DeconvError):
    """The kernel has neither a derivative weight nor a closed-form reciprocal."""


class DivergentSolve(DeconvError):
    """The Volterra march produced values beyond the magnitude cap."""


class OutOfHorizon(DeconvError):
    """A tabulated reciprocal kernel was evaluated beyond its horizon."""


class ZeroDensity(DeconvError):
    """The convolution density vanishes at an observation."""


class NotConverged(DeconvError):
    """An iterative fit hit its iteration limit.

    The partially converged fit is attached as ``fit`` for diagnostics.
    """

    def __init__(self, message, fit=None):
        super().__init__(message)
        self.fit = fit


class PerturbationInfeasible(DeconvError):
    """The requested perturbation does not give a concave distribution function."""


class QuadratureFailure(DeconvError):
    """Adaptive quadrature did not reach the requested tolerance."""


class StudyFailed(DeconvError):
    """Too many Monte Carlo replications failed."""
