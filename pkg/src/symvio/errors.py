"""Exception types shared across the package."""


class GeometryError(ValueError):
    """Invalid geometric input (non-orthonormal rotation, zero direction, ...)."""


class CutLocusError(GeometryError):
    """Rotation logarithm requested at or within tolerance of the angle-pi cut locus."""


class ChartDomainError(GeometryError):
    """State lies outside the neighbourhood covered by the local coordinate chart."""


class ExceptionSetError(GeometryError):
    """A landmark coincides with the camera centre (undefined bearing)."""


class LandmarkMismatchError(GeometryError):
    """Landmark id registries of two objects do not line up."""


class GainConfigError(ValueError):
    """Filter gain configuration is not positive definite or otherwise unusable."""


class DivergenceError(RuntimeError):
    """Filter state or covariance became non-finite or an innovation covariance collapsed."""


class ConfigError(ValueError):
    """Run configuration file is malformed or contains unknown keys."""


class ParseError(ValueError):
    """A data file (CSV stream) is malformed."""
