"""Exception hierarchy shared by the jeffmix modules."""


class JeffmixError(Exception):
    """Base class for all package errors."""


class ParameterDomainError(JeffmixError, ValueError):
    """A parameter lies outside its admissible domain."""


class AllocationError(JeffmixError, ValueError):
    """An allocation vector is inconsistent with the mixture."""


class InstanceTooLargeError(JeffmixError):
    """Brute-force enumeration would exceed the configured guard."""


class IntegrationError(JeffmixError):
    """Adaptive quadrature failed to converge.

    Attributes
    ----------
    estimate : float
        Partial estimate returned by the integrator.
    abserr : float
        Absolute error estimate reported by the integrator.
    """

    def __init__(self, message, estimate=float("nan"), abserr=float("nan")):
        super().__init__(message)
        self.estimate = estimate
        self.abserr = abserr


class DegenerateInformationError(JeffmixError):
    """The Fisher information is numerically singular or indefinite."""


class BoundaryEvaluationError(JeffmixError):
    """A prior could not be evaluated at a boundary point of the simplex."""


class InitializationError(JeffmixError):
    """The sampler target is not finite at the initial state."""


class ConfigError(JeffmixError, ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class EstimationError(JeffmixError):
    """An iterative estimator (e.g. bridge sampling) did not converge.

    ``diagnostics`` holds the state at the point of failure.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
