"""Exception types shared across the package."""


class CanonLtiError(Exception):
    """Base class for all package errors."""


class DimensionError(CanonLtiError, ValueError):
    """Matrix or trajectory dimensions are inconsistent."""


class NotSpdError(CanonLtiError, ValueError):
    """A matrix required to be symmetric positive definite is not."""


class UnstableSystemError(CanonLtiError, ValueError):
    """An operation required a stable state matrix."""


class NearPoleError(CanonLtiError, ValueError):
    """Transfer function evaluated too close to a pole of the resolvent."""


class IllConditionedTransformError(CanonLtiError, ValueError):
    """A similarity transformation is singular or too ill-conditioned."""


class NotControllableError(CanonLtiError, ValueError):
    """The (A, B) pair is not controllable to working precision."""

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class DegenerateSpectrumError(CanonLtiError, ValueError):
    """Eigenvalues are too close together for a Jacobian-dependent operation."""


class FilterError(CanonLtiError, RuntimeError):
    """Kalman filtering failed (non-finite data or indefinite innovation covariance)."""


class DecodeError(CanonLtiError, ValueError):
    """A flat parameter vector does not match its declared layout."""


class SamplerError(CanonLtiError, RuntimeError):
    """MCMC sampling could not proceed (e.g. all-divergent warm-up)."""


class SingularFimError(CanonLtiError, ValueError):
    """Fisher information matrix is singular where a definite one is required."""


class ConfigError(CanonLtiError, ValueError):
    """Experiment configuration file violates the schema."""
