"""Exception hierarchy.

Three families map to stable process exit codes: configuration parsing (2),
model validation (3) and numerical failure (4).
"""


class ConfigParseError(ValueError):
    """Raised when a model or experiment file cannot be parsed or violates its schema."""

    exit_code = 2


class ModelValidationError(ValueError):
    """Raised when a model violates a structural assumption of the theory."""

    exit_code = 3


class NumericalFailure(ArithmeticError):
    """Raised when a computation breaks down numerically."""

    exit_code = 4


# Model validation


class DimensionMismatchError(ModelValidationError):
    """Raised when matrix or field shapes are inconsistent."""

    pass


class NotPositiveStableError(ModelValidationError):
    """Raised when a matrix has an eigenvalue with non-positive real part."""

    pass


class NotPositiveDefiniteError(ModelValidationError):
    """Raised when a matrix expected to be symmetric positive definite is not."""

    pass


class LyapunovConsistencyError(ModelValidationError):
    """Raised when a realization triple does not satisfy its Lyapunov condition."""

    pass


class RankDeficientError(ModelValidationError):
    """Raised when an output matrix C does not have full row rank."""

    pass


class SingularEffectiveConstantError(ModelValidationError):
    """Raised when K1 or K2 is numerically singular."""

    pass


class NonPositiveRateError(ModelValidationError):
    """Raised when an Ornstein-Uhlenbeck rate is not strictly positive."""

    pass


class CriticalDampingError(ModelValidationError):
    """Raised when a harmonic frequency sits at the degenerate value |Omega| = 2."""

    pass


class ZeroFrequencyError(ModelValidationError):
    """Raised when a harmonic frequency is zero."""

    pass


class WrongNoiseKindError(ModelValidationError):
    """Raised when a closed form is requested for the other noise kind."""

    pass


class DomainViolationError(ModelValidationError):
    """Raised when D or T is not positive at an evaluated position."""

    pass


class InsufficientModesError(ModelValidationError):
    """Raised when a heat bath is requested with too few oscillators."""

    pass


class UnsupportedClosedFormError(ModelValidationError):
    """Raised when no closed-form drift exists for the given system."""

    pass


class InvalidParameterError(ModelValidationError):
    """Raised when a scalar parameter is outside its admissible range."""

    pass


# Numerical failures


class SingularSystemError(NumericalFailure):
    """Raised when a linear system is singular."""

    pass


class MatrixOverflowError(NumericalFailure):
    """Raised when a matrix exponential overflows."""

    pass


class SingularThetaError(NumericalFailure):
    """Raised when theta(x) = g K1 h is singular at a state."""

    pass


class JacobianUnavailableError(NumericalFailure):
    """Raised when a derivative is needed but neither analytic nor finite differences are allowed."""

    pass


class ZeroDampingError(NumericalFailure):
    """Raised when a closed-form drift is evaluated where g(x) = 0."""

    pass


class DegenerateDenominatorError(NumericalFailure):
    """Raised when a closed-form drift denominator vanishes."""

    pass


class DegenerateRError(DegenerateDenominatorError):
    """Raised when the harmonic normalizer R(X) vanishes."""

    pass


class UnstableStepError(NumericalFailure):
    """Raised when a time integrator diverges or the step violates its bound."""

    pass


class QuadratureFailureError(NumericalFailure):
    """Raised when adaptive quadrature does not converge."""

    pass


class InsufficientSamplesError(NumericalFailure):
    """Raised when there is not enough data for a statistical estimate."""

    pass
