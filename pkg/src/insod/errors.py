"""Exception types raised across the package."""


class InsodError(Exception):
    """Base class for all package errors."""


class PolarSingularity(InsodError):
    """Curvature matrix is singular (cos(lat) too close to zero)."""


class InvalidSegment(InsodError):
    """A trajectory segment requests an impossible motion."""


class InsufficientSamples(InsodError):
    pass


class InsufficientDistance(InsodError):
    """Error series does not extend past the evaluation threshold."""


class WindowUnderflow(InsodError):
    pass


class KindMismatch(InsodError):
    """Sensor payload does not match the requested measurement kind."""


class CovarianceNotPD(InsodError):
    """Covariance lost symmetry/positive-(semi)definiteness or became non-finite."""


class SingularInnovationCovariance(InsodError):
    pass


class DegenerateLikelihoods(InsodError):
    pass


class StreamGap(InsodError):
    """Sensor streams have missing epochs beyond one sample interval."""


class SchemaError(InsodError):
    """Malformed CSV input; message carries the offending line number."""


class InvalidConfig(InsodError):
    pass
